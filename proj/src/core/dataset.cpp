#include "dataset.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "csv.hpp"

namespace mscluster {

TransitionSpec TransitionSpec::chain(int num_transitions) {
  TransitionSpec s;
  for (int k = 0; k < num_transitions; ++k) s.transitions.emplace_back(k, k + 1);
  s.validate();
  return s;
}

std::vector<int> TransitionSpec::states() const {
  std::set<int> st;
  for (auto& [a, b] : transitions) {
    st.insert(a);
    st.insert(b);
  }
  return {st.begin(), st.end()};
}

std::vector<int> TransitionSpec::absorbing_states() const {
  std::set<int> has_out;
  for (auto& [a, b] : transitions) has_out.insert(a);
  std::vector<int> out;
  for (int s : states())
    if (!has_out.count(s)) out.push_back(s);
  return out;
}

int TransitionSpec::initial_state() const {
  std::set<int> has_in;
  for (auto& [a, b] : transitions) has_in.insert(b);
  std::vector<int> roots;
  for (int s : states())
    if (!has_in.count(s)) roots.push_back(s);
  require(roots.size() == 1, errc::validation,
          "transition spec must have exactly one initial state, found " + std::to_string(roots.size()));
  return roots[0];
}

void TransitionSpec::validate() const {
  require(!transitions.empty(), errc::validation, "transition spec needs at least one transition");
  for (auto& [a, b] : transitions)
    require(a != b, errc::validation, "self transition " + std::to_string(a));
  // DAG check by Kahn's algorithm.
  auto st = states();
  std::map<int, int> indeg;
  std::map<int, std::vector<int>> adj;
  for (int s : st) indeg[s] = 0;
  for (auto& [a, b] : transitions) {
    adj[a].push_back(b);
    indeg[b]++;
  }
  std::vector<int> queue;
  for (auto& [s, d] : indeg)
    if (d == 0) queue.push_back(s);
  std::size_t seen = 0;
  while (!queue.empty()) {
    int s = queue.back();
    queue.pop_back();
    ++seen;
    for (int t : adj[s])
      if (--indeg[t] == 0) queue.push_back(t);
  }
  require(seen == st.size(), errc::validation, "transition graph has a cycle");
  initial_state();
}

Matrix MultiStateDataset::transition_matrix(int k) const {
  const auto& cols = transition_cols[k];
  Matrix out(X.rows(), cols.size());
  for (std::size_t j = 0; j < cols.size(); ++j) out.col(j) = X.col(cols[j]);
  return out;
}

void MultiStateDataset::validate() const {
  int K = num_transitions();
  require(static_cast<int>(time.size()) == K && static_cast<int>(event.size()) == K &&
              static_cast<int>(at_risk.size()) == K,
          errc::validation, "per-transition arrays do not match K");
  std::unordered_set<std::string> seen;
  for (auto& nm : feature_names)
    require(seen.insert(nm).second, errc::validation, "duplicated feature name '" + nm + "'");
  std::vector<bool> used(X.cols(), false);
  for (int k = 0; k < K; ++k) {
    require(time[k].size() == X.rows() && event[k].size() == X.rows() && at_risk[k].size() == X.rows(),
            errc::validation, "transition vectors must have length n");
    for (int c : transition_cols[k]) used[c] = true;
    for (int i = 0; i < n(); ++i) {
      double d = event[k](i);
      require(d == 0.0 || d == 1.0, errc::validation, "event indicator must be 0 or 1");
      require(time[k](i) >= 0.0, errc::validation, "negative time");
      if (d == 1.0)
        require(at_risk[k](i) == 1.0 && time[k](i) > 0.0, errc::validation,
                "event implies at-risk with positive time");
    }
  }
  for (int c = 0; c < p(); ++c)
    require(used[c], errc::validation, "feature '" + feature_names[c] + "' unused by every transition");
  require(!X.hasNaN(), errc::validation, "NaN in covariate matrix");
}

void infer_at_risk(MultiStateDataset& ds) {
  int K = ds.num_transitions();
  int n = ds.n();
  int init = ds.spec.initial_state();
  ds.at_risk.assign(K, Vector::Zero(n));

  // Topological order over transitions: process k once its origin's entry
  // status is settled. Transitions are DAG edges, so ordering by a topo sort
  // of states works.
  auto states = ds.spec.states();
  std::map<int, int> indeg;
  std::map<int, std::vector<int>> adj;
  for (int s : states) indeg[s] = 0;
  for (auto& [a, b] : ds.spec.transitions) {
    adj[a].push_back(b);
    indeg[b]++;
  }
  std::vector<int> topo;
  std::vector<int> queue;
  for (auto& [s, d] : indeg)
    if (d == 0) queue.push_back(s);
  while (!queue.empty()) {
    int s = queue.back();
    queue.pop_back();
    topo.push_back(s);
    for (int t : adj[s])
      if (--indeg[t] == 0) queue.push_back(t);
  }
  std::map<int, int> state_rank;
  for (std::size_t i = 0; i < topo.size(); ++i) state_rank[topo[i]] = static_cast<int>(i);
  std::vector<int> korder(K);
  std::iota(korder.begin(), korder.end(), 0);
  std::sort(korder.begin(), korder.end(), [&](int a, int b) {
    return state_rank[ds.spec.transitions[a].first] < state_rank[ds.spec.transitions[b].first];
  });

  for (int i = 0; i < n; ++i) {
    std::map<int, bool> entered;
    entered[init] = true;
    for (int k : korder) {
      auto [from, to] = ds.spec.transitions[k];
      bool risk = entered.count(from) && entered[from];
      ds.at_risk[k](i) = risk ? 1.0 : 0.0;
      if (risk && ds.event[k](i) == 1.0) entered[to] = true;
    }
  }
}

MultiStateDataset load_dataset(const std::string& covariates_csv, const std::string& transitions_csv,
                               const TransitionSpec& spec, std::vector<std::string>* warnings) {
  spec.validate();
  auto cov = csv::read_file(covariates_csv);
  auto trans = csv::read_file(transitions_csv);

  int id_col = cov.col_required("patient_id");
  std::vector<std::string> feature_names;
  std::vector<int> feature_cols;
  for (int c = 0; c < static_cast<int>(cov.header.size()); ++c) {
    if (c == id_col) continue;
    feature_names.push_back(cov.header[c]);
    feature_cols.push_back(c);
  }
  require(!feature_names.empty(), errc::schema, covariates_csv + ": no feature columns");
  {
    std::unordered_set<std::string> seen;
    for (auto& nm : feature_names)
      require(seen.insert(nm).second, errc::schema, "duplicated column name '" + nm + "'");
  }

  // Rows with missing values are excluded rather than imputed.
  std::vector<std::string> ids;
  std::vector<std::vector<double>> rows;
  std::unordered_map<std::string, int> id_index;
  int excluded = 0;
  for (auto& r : cov.rows) {
    const std::string& pid = r[id_col];
    require(!id_index.count(pid) &&
                std::find(ids.begin(), ids.end(), pid) == ids.end(),
            errc::schema, "duplicate patient_id '" + pid + "'");
    bool missing = false;
    std::vector<double> vals;
    vals.reserve(feature_cols.size());
    for (int c : feature_cols) {
      if (csv::is_missing(r[c])) {
        missing = true;
        break;
      }
      vals.push_back(csv::to_double(r[c], covariates_csv));
    }
    if (missing) {
      ++excluded;
      continue;
    }
    id_index[pid] = static_cast<int>(ids.size());
    ids.push_back(pid);
    rows.push_back(std::move(vals));
  }
  if (excluded && warnings)
    warnings->push_back("excluded " + std::to_string(excluded) + " patients with missing covariates");
  require(!ids.empty(), errc::validation, covariates_csv + ": no complete patient rows");

  int n = static_cast<int>(ids.size());
  int p = static_cast<int>(feature_names.size());
  int K = spec.num_transitions();

  MultiStateDataset ds;
  ds.spec = spec;
  ds.patient_ids = ids;
  ds.feature_names = feature_names;
  ds.X.resize(n, p);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < p; ++j) ds.X(i, j) = rows[i][j];
  ds.transition_cols.assign(K, {});
  for (int k = 0; k < K; ++k) {
    ds.transition_cols[k].resize(p);
    std::iota(ds.transition_cols[k].begin(), ds.transition_cols[k].end(), 0);
  }
  ds.time.assign(K, Vector::Zero(n));
  ds.event.assign(K, Vector::Zero(n));

  int t_pid = trans.col_required("patient_id");
  int t_k = trans.col_required("transition_id");
  int t_time = trans.col_required("time");
  int t_status = trans.col_required("status");
  std::set<std::pair<int, int>> filled;
  for (auto& r : trans.rows) {
    const std::string& pid = r[t_pid];
    auto it = id_index.find(pid);
    if (it == id_index.end()) {
      // Distinguish "excluded for missing covariates" from a genuine join gap.
      bool was_excluded = false;
      for (auto& cr : cov.rows)
        if (cr[id_col] == pid) {
          was_excluded = true;
          break;
        }
      if (was_excluded) continue;
      fail(errc::join, "patient '" + pid + "' present in transitions but absent in covariates");
    }
    int i = it->second;
    double kval = csv::to_double(r[t_k], transitions_csv);
    int k = static_cast<int>(kval);
    require(kval == k && k >= 1 && k <= K, errc::validation,
            "transition_id " + r[t_k] + " outside 1.." + std::to_string(K));
    k -= 1;  // ids are 1-based in the file
    double tv = csv::to_double(r[t_time], transitions_csv);
    require(tv >= 0.0, errc::validation, "negative time for patient '" + pid + "'");
    double sv = csv::to_double(r[t_status], transitions_csv);
    require(sv == 0.0 || sv == 1.0, errc::validation,
            "status must be 0 or 1, got " + r[t_status]);
    require(filled.insert({i, k}).second, errc::schema,
            "duplicate (patient, transition) row for '" + pid + "'");
    ds.time[k](i) = tv;
    ds.event[k](i) = sv;
  }

  infer_at_risk(ds);

  // An event recorded for a transition the patient never reached is
  // inconsistent input, not something at-risk inference may silently fix.
  for (int k = 0; k < K; ++k)
    for (int i = 0; i < n; ++i)
      if (ds.event[k](i) == 1.0) {
        require(ds.at_risk[k](i) == 1.0, errc::validation,
                "patient '" + ids[i] + "' has an event for transition " + std::to_string(k + 1) +
                    " without reaching its origin state");
        require(ds.time[k](i) > 0.0, errc::validation,
                "patient '" + ids[i] + "' has an event at time 0 for transition " +
                    std::to_string(k + 1));
      }

  ds.validate();
  return ds;
}

void write_dataset(const MultiStateDataset& ds, const std::string& covariates_csv,
                   const std::string& transitions_csv) {
  csv::Writer cov(covariates_csv);
  std::vector<std::string> head = {"patient_id"};
  head.insert(head.end(), ds.feature_names.begin(), ds.feature_names.end());
  cov.row(head);
  for (int i = 0; i < ds.n(); ++i) {
    std::vector<std::string> r = {ds.patient_ids[i]};
    for (int j = 0; j < ds.p(); ++j) r.push_back(csv::format_double(ds.X(i, j)));
    cov.row(r);
  }
  cov.close();

  csv::Writer tr(transitions_csv);
  tr.row({"patient_id", "transition_id", "time", "status"});
  for (int k = 0; k < ds.num_transitions(); ++k)
    for (int i = 0; i < ds.n(); ++i)
      tr.row({ds.patient_ids[i], std::to_string(k + 1), csv::format_double(ds.time[k](i)),
              ds.event[k](i) == 1.0 ? "1" : "0"});
  tr.close();
}

namespace {

void drop_columns(MultiStateDataset& ds, const std::vector<int>& drop) {
  if (drop.empty()) return;
  std::vector<int> keep;
  std::vector<bool> dropped(ds.p(), false);
  for (int c : drop) dropped[c] = true;
  for (int c = 0; c < ds.p(); ++c)
    if (!dropped[c]) keep.push_back(c);
  require(!keep.empty(), errc::empty_feature, "all features dropped");

  std::vector<int> remap(ds.p(), -1);
  Matrix X(ds.n(), keep.size());
  std::vector<std::string> names;
  for (std::size_t j = 0; j < keep.size(); ++j) {
    X.col(j) = ds.X.col(keep[j]);
    names.push_back(ds.feature_names[keep[j]]);
    remap[keep[j]] = static_cast<int>(j);
  }
  ds.X = std::move(X);
  ds.feature_names = std::move(names);
  for (auto& cols : ds.transition_cols) {
    std::vector<int> nc;
    for (int c : cols)
      if (remap[c] >= 0) nc.push_back(remap[c]);
    require(!nc.empty(), errc::empty_feature, "a transition lost all its features");
    cols = std::move(nc);
  }
}

}  // namespace

std::pair<MultiStateDataset, PreprocessReport> standardize(const MultiStateDataset& ds) {
  require(ds.n() >= 2, errc::validation, "standardize needs n >= 2");
  MultiStateDataset out = ds;
  PreprocessReport rep;
  std::vector<int> drop;
  int n = ds.n();
  for (int j = 0; j < ds.p(); ++j) {
    double mean = ds.X.col(j).mean();
    double ss = (ds.X.col(j).array() - mean).square().sum();
    double sd = std::sqrt(ss / (n - 1));
    if (sd <= 1e-12) {
      drop.push_back(j);
      rep.dropped.push_back({ds.feature_names[j], "zero-variance"});
      continue;
    }
    out.X.col(j) = (ds.X.col(j).array() - mean) / sd;
    rep.standardization.emplace_back(ds.feature_names[j], mean, sd);
  }
  require(static_cast<int>(drop.size()) < ds.p(), errc::empty_feature,
          "every column has zero variance");
  drop_columns(out, drop);
  return {out, rep};
}

double pearson_correlation(const Vector& a, const Vector& b) {
  double ma = a.mean(), mb = b.mean();
  Eigen::ArrayXd da = a.array() - ma, db = b.array() - mb;
  double denom = std::sqrt(da.square().sum() * db.square().sum());
  if (denom == 0.0) return 0.0;
  return (da * db).sum() / denom;
}

namespace {

Vector ranks(const Vector& v) {
  int n = static_cast<int>(v.size());
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](int a, int b) { return v(a) < v(b); });
  Vector r(n);
  int i = 0;
  while (i < n) {
    int j = i;
    while (j + 1 < n && v(idx[j + 1]) == v(idx[i])) ++j;
    double avg = 0.5 * (i + j) + 1.0;  // average rank for ties, 1-based
    for (int m = i; m <= j; ++m) r(idx[m]) = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

double spearman_correlation(const Vector& a, const Vector& b) {
  return pearson_correlation(ranks(a), ranks(b));
}

std::pair<MultiStateDataset, PreprocessReport> correlation_filter(const MultiStateDataset& ds,
                                                                  double threshold,
                                                                  CorrelationMethod method) {
  require(threshold > 0.0 && threshold <= 1.0, errc::validation,
          "correlation threshold must be in (0, 1]");
  PreprocessReport rep;
  std::vector<int> retained;
  std::vector<int> drop;
  for (int j = 0; j < ds.p(); ++j) {
    bool redundant = false;
    for (int r : retained) {
      double corr = method == CorrelationMethod::pearson
                        ? pearson_correlation(ds.X.col(j), ds.X.col(r))
                        : spearman_correlation(ds.X.col(j), ds.X.col(r));
      if (std::abs(corr) > threshold) {
        redundant = true;
        break;
      }
    }
    if (redundant) {
      drop.push_back(j);
      rep.dropped.push_back({ds.feature_names[j], "correlated"});
    } else {
      retained.push_back(j);
    }
  }
  MultiStateDataset out = ds;
  drop_columns(out, drop);
  return {out, rep};
}

std::pair<std::pair<MultiStateDataset, MultiStateDataset>, PreprocessReport>
correlation_filter_intersect(const MultiStateDataset& a, const MultiStateDataset& b,
                             double threshold, CorrelationMethod method) {
  require(a.feature_names == b.feature_names, errc::validation,
          "intersect filter requires matching feature sets");
  auto [fa, ra] = correlation_filter(a, threshold, method);
  auto [fb, rb] = correlation_filter(b, threshold, method);
  std::set<std::string> da, db;
  for (auto& d : ra.dropped) da.insert(d.name);
  for (auto& d : rb.dropped) db.insert(d.name);
  PreprocessReport rep;
  std::vector<int> drop;
  for (int j = 0; j < a.p(); ++j)
    if (da.count(a.feature_names[j]) && db.count(a.feature_names[j])) {
      drop.push_back(j);
      rep.dropped.push_back({a.feature_names[j], "correlated"});
    }
  MultiStateDataset oa = a, ob = b;
  drop_columns(oa, drop);
  drop_columns(ob, drop);
  return {{oa, ob}, rep};
}

}  // namespace mscluster
