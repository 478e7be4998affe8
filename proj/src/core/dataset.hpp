#pragma once

#include <string>
#include <utility>
#include <vector>

#include "common.hpp"

namespace mscluster {

// Directed transition structure over clinical states. States are integer ids;
// the graph must be a DAG with a single initial state (no incoming edges).
struct TransitionSpec {
  std::vector<std::pair<int, int>> transitions;  // (from_state, to_state), order defines k

  static TransitionSpec chain(int num_transitions);

  int num_transitions() const { return static_cast<int>(transitions.size()); }
  std::vector<int> states() const;
  std::vector<int> absorbing_states() const;
  int initial_state() const;
  void validate() const;
};

struct PreprocessReport {
  struct Drop {
    std::string name;
    std::string reason;  // "zero-variance" or "correlated"
  };
  std::vector<Drop> dropped;
  // (feature name, mean, sd) applied during standardization
  std::vector<std::tuple<std::string, double, double>> standardization;
  std::vector<std::string> warnings;
};

// Clock-reset multi-state cohort. The global covariate matrix X holds the
// deduplicated union of per-transition covariates; each transition addresses
// its columns through an index list.
struct MultiStateDataset {
  TransitionSpec spec;
  std::vector<std::string> patient_ids;
  std::vector<std::string> feature_names;
  Matrix X;                                        // n x p
  std::vector<std::vector<int>> transition_cols;   // per k: column indices into X
  std::vector<Vector> time;                        // per k: n sojourn times (clock reset)
  std::vector<Vector> event;                       // per k: n event indicators in {0,1}
  std::vector<Vector> at_risk;                     // per k: n at-risk indicators in {0,1}

  int n() const { return static_cast<int>(X.rows()); }
  int p() const { return static_cast<int>(X.cols()); }
  int num_transitions() const { return spec.num_transitions(); }
  int p_k(int k) const { return static_cast<int>(transition_cols[k].size()); }
  Matrix transition_matrix(int k) const;

  void validate() const;
};

MultiStateDataset load_dataset(const std::string& covariates_csv, const std::string& transitions_csv,
                               const TransitionSpec& spec,
                               std::vector<std::string>* warnings = nullptr);

void write_dataset(const MultiStateDataset& ds, const std::string& covariates_csv,
                   const std::string& transitions_csv);

// Computes the at-risk masks from the event indicators: a patient is at risk
// for transition k iff they entered k's origin state (initial state, or via an
// observed upstream transition).
void infer_at_risk(MultiStateDataset& ds);

std::pair<MultiStateDataset, PreprocessReport> standardize(const MultiStateDataset& ds);

enum class CorrelationMethod { pearson, spearman };

std::pair<MultiStateDataset, PreprocessReport> correlation_filter(const MultiStateDataset& ds,
                                                                  double threshold,
                                                                  CorrelationMethod method);

// Two-dataset variant: drops only the features flagged as redundant in both
// datasets (applied to both, which must share the feature set).
std::pair<std::pair<MultiStateDataset, MultiStateDataset>, PreprocessReport>
correlation_filter_intersect(const MultiStateDataset& a, const MultiStateDataset& b,
                             double threshold, CorrelationMethod method);

double pearson_correlation(const Vector& a, const Vector& b);
double spearman_correlation(const Vector& a, const Vector& b);

}  // namespace mscluster
