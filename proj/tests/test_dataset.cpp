#include <doctest.h>
#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "core/csv.hpp"
#include "core/dataset.hpp"
#include "core/rng.hpp"
#include "helpers.hpp"

using namespace mscluster;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("msc_test_" + std::to_string(::getpid()) + "_" +
                                        std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  static int& counter() {
    static int c = 0;
    return c;
  }
  std::string file(const std::string& name, const std::string& content) const {
    auto p = (path / name).string();
    std::ofstream out(p);
    out << content;
    return p;
  }
};

}  // namespace

TEST_CASE("transition spec validation") {
  CHECK(TransitionSpec::chain(2).num_transitions() == 2);
  CHECK(TransitionSpec::chain(3).initial_state() == 0);
  CHECK(TransitionSpec::chain(1).absorbing_states() == std::vector<int>{1});

  TransitionSpec cyclic;
  cyclic.transitions = {{0, 1}, {1, 0}};
  CHECK_THROWS_AS(cyclic.validate(), Error);

  TransitionSpec competing;  // 0->1, 1->2, 1->3, 2->3
  competing.transitions = {{0, 1}, {1, 2}, {1, 3}, {2, 3}};
  CHECK_NOTHROW(competing.validate());
  CHECK(competing.absorbing_states() == std::vector<int>{3});
}

TEST_CASE("load_dataset fully observed chain") {
  TempDir dir;
  auto cov = dir.file("cov.csv",
                      "patient_id,a,b\n"
                      "p1,1.0,2.0\n"
                      "p2,0.5,1.5\n"
                      "p3,-1.0,0.0\n");
  auto tr = dir.file("tr.csv",
                     "patient_id,transition_id,time,status\n"
                     "p1,1,1.0,1\np1,2,2.0,1\n"
                     "p2,1,1.5,1\np2,2,0.5,1\n"
                     "p3,1,0.7,1\np3,2,1.2,1\n");
  auto ds = load_dataset(cov, tr, TransitionSpec::chain(2));
  CHECK(ds.n() == 3);
  CHECK(ds.num_transitions() == 2);
  for (int k = 0; k < 2; ++k)
    for (int i = 0; i < 3; ++i) CHECK(ds.at_risk[k](i) == 1.0);
}

TEST_CASE("censored before transition 1 is not at risk downstream") {
  TempDir dir;
  auto cov = dir.file("cov.csv", "patient_id,a\np1,1.0\np2,2.0\n");
  auto tr = dir.file("tr.csv",
                     "patient_id,transition_id,time,status\n"
                     "p1,1,1.0,0\np1,2,0.0,0\n"
                     "p2,1,1.0,1\np2,2,2.0,1\n");
  auto ds = load_dataset(cov, tr, TransitionSpec::chain(2));
  CHECK(ds.at_risk[0](0) == 1.0);
  CHECK(ds.at_risk[1](0) == 0.0);
  CHECK(ds.at_risk[1](1) == 1.0);
}

TEST_CASE("load_dataset error paths") {
  TempDir dir;
  auto cov = dir.file("cov.csv", "patient_id,a\np1,1.0\np2,2.0\n");

  SUBCASE("status outside 0/1") {
    auto tr = dir.file("tr.csv", "patient_id,transition_id,time,status\np1,1,1.0,2\n");
    CHECK_THROWS_WITH_AS(load_dataset(cov, tr, TransitionSpec::chain(1)),
                         doctest::Contains("status"), Error);
  }
  SUBCASE("negative time") {
    auto tr = dir.file("tr.csv", "patient_id,transition_id,time,status\np1,1,-1.0,0\n");
    CHECK_THROWS_WITH_AS(load_dataset(cov, tr, TransitionSpec::chain(1)),
                         doctest::Contains("negative"), Error);
  }
  SUBCASE("duplicate patient id") {
    auto cov2 = dir.file("cov2.csv", "patient_id,a\np1,1.0\np1,2.0\n");
    auto tr = dir.file("tr.csv", "patient_id,transition_id,time,status\np1,1,1.0,1\n");
    CHECK_THROWS_AS(load_dataset(cov2, tr, TransitionSpec::chain(1)), Error);
  }
  SUBCASE("patient in transitions missing from covariates") {
    auto tr = dir.file("tr.csv",
                       "patient_id,transition_id,time,status\np1,1,1.0,1\npX,1,1.0,1\n");
    try {
      load_dataset(cov, tr, TransitionSpec::chain(1));
      FAIL("expected join error");
    } catch (const Error& e) {
      CHECK(e.code() == errc::join);
    }
  }
  SUBCASE("rows with missing covariates are excluded") {
    auto cov3 = dir.file("cov3.csv", "patient_id,a\np1,1.0\np2,NA\np3,3.0\n");
    auto tr = dir.file("tr.csv",
                       "patient_id,transition_id,time,status\n"
                       "p1,1,1.0,1\np2,1,2.0,1\np3,1,1.5,0\n");
    std::vector<std::string> warnings;
    auto ds = load_dataset(cov3, tr, TransitionSpec::chain(1), &warnings);
    CHECK(ds.n() == 2);
    CHECK(warnings.size() == 1);
  }
}

TEST_CASE("write/load round trip is exact") {
  Rng rng(42);
  auto ds = testing::random_dataset(rng, 12, 4, 3);
  TempDir dir;
  auto cov = (dir.path / "cov.csv").string();
  auto tr = (dir.path / "tr.csv").string();
  write_dataset(ds, cov, tr);
  auto back = load_dataset(cov, tr, ds.spec);
  CHECK(back.n() == ds.n());
  CHECK(back.feature_names == ds.feature_names);
  CHECK((back.X - ds.X).cwiseAbs().maxCoeff() == 0.0);
  for (int k = 0; k < ds.num_transitions(); ++k) {
    CHECK((back.time[k] - ds.time[k]).cwiseAbs().maxCoeff() == 0.0);
    CHECK((back.event[k] - ds.event[k]).cwiseAbs().maxCoeff() == 0.0);
    CHECK((back.at_risk[k] - ds.at_risk[k]).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("at-risk monotone along the chain") {
  Rng rng(7);
  for (int rep = 0; rep < 20; ++rep) {
    auto ds = testing::random_dataset(rng, 10, 2, 3);
    for (int i = 0; i < ds.n(); ++i)
      for (int k = 1; k < ds.num_transitions(); ++k)
        if (ds.at_risk[k](i) == 1.0) CHECK(ds.at_risk[k - 1](i) == 1.0);
  }
}

TEST_CASE("standardize") {
  MultiStateDataset ds;
  ds.spec = TransitionSpec::chain(1);
  ds.patient_ids = {"a", "b", "c"};
  ds.feature_names = {"x", "const", "y"};
  ds.X.resize(3, 3);
  ds.X << 1, 5, 10, 2, 5, 20, 3, 5, 60;
  ds.transition_cols = {{0, 1, 2}};
  ds.time = {Vector::Ones(3)};
  ds.event = {Vector::Ones(3)};
  ds.at_risk = {Vector::Ones(3)};

  auto [out, rep] = standardize(ds);
  SUBCASE("symmetric column maps to -1,0,1") {
    CHECK(out.X(0, 0) == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(out.X(1, 0) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(out.X(2, 0) == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("constant column dropped with reason") {
    CHECK(out.p() == 2);
    REQUIRE(rep.dropped.size() == 1);
    CHECK(rep.dropped[0].name == "const");
    CHECK(rep.dropped[0].reason == "zero-variance");
  }
  SUBCASE("statistics are mean 0 sd 1") {
    for (int j = 0; j < out.p(); ++j) {
      CHECK(std::abs(out.X.col(j).mean()) < 1e-10);
      double sd = std::sqrt((out.X.col(j).array() - out.X.col(j).mean()).square().sum() / 2.0);
      CHECK(sd == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
  SUBCASE("idempotent within 1e-12") {
    auto [twice, rep2] = standardize(out);
    CHECK((twice.X - out.X).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("all constant columns is an error") {
    MultiStateDataset flat = ds;
    flat.X.col(0).setConstant(1);
    flat.X.col(1).setConstant(2);
    flat.X.col(2).setConstant(3);
    CHECK_THROWS_AS(standardize(flat), Error);
  }
}

TEST_CASE("correlation filter") {
  MultiStateDataset ds;
  ds.spec = TransitionSpec::chain(1);
  int n = 10;
  for (int i = 0; i < n; ++i) ds.patient_ids.push_back("p" + std::to_string(i));
  ds.feature_names = {"a", "acopy", "b"};
  ds.X.resize(n, 3);
  Rng rng(3);
  for (int i = 0; i < n; ++i) {
    ds.X(i, 0) = rng.normal();
    ds.X(i, 1) = ds.X(i, 0);
    ds.X(i, 2) = rng.normal();
  }
  ds.transition_cols = {{0, 1, 2}};
  ds.time = {Vector::Ones(n)};
  ds.event = {Vector::Ones(n)};
  ds.at_risk = {Vector::Ones(n)};

  SUBCASE("identical duplicate dropped at 0.9") {
    auto [out, rep] = correlation_filter(ds, 0.9, CorrelationMethod::pearson);
    REQUIRE(rep.dropped.size() == 1);
    CHECK(rep.dropped[0].name == "acopy");
    CHECK(rep.dropped[0].reason == "correlated");
  }
  SUBCASE("independent columns retained, r checked against hand formula") {
    double sxy = 0, sx = 0, sy = 0, sxx = 0, syy = 0;
    for (int i = 0; i < n; ++i) {
      sx += ds.X(i, 0);
      sy += ds.X(i, 2);
      sxy += ds.X(i, 0) * ds.X(i, 2);
      sxx += ds.X(i, 0) * ds.X(i, 0);
      syy += ds.X(i, 2) * ds.X(i, 2);
    }
    double r = (n * sxy - sx * sy) / std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy));
    CHECK(pearson_correlation(ds.X.col(0), ds.X.col(2)) == doctest::Approx(r).epsilon(1e-12));
    REQUIRE(std::abs(r) < 0.9);  // fixture sanity
    auto [out, rep] = correlation_filter(ds, 0.9, CorrelationMethod::pearson);
    CHECK(out.p() == 2);  // only the exact copy dropped
  }
  SUBCASE("threshold 1.0 with non-identical columns keeps everything") {
    MultiStateDataset noisy = ds;
    noisy.X(0, 1) += 0.5;  // break the exact copy
    auto [out, rep] = correlation_filter(noisy, 1.0, CorrelationMethod::pearson);
    CHECK(out.p() == 3);
  }
  SUBCASE("threshold <= 0 rejected") {
    CHECK_THROWS_AS(correlation_filter(ds, 0.0, CorrelationMethod::pearson), Error);
  }
  SUBCASE("spearman of a column with itself is 1") {
    CHECK(spearman_correlation(ds.X.col(0), ds.X.col(0)) == doctest::Approx(1.0));
    double rs = spearman_correlation(ds.X.col(0), ds.X.col(2));
    CHECK(rs <= 1.0);
    CHECK(rs >= -1.0);
  }
  SUBCASE("intersect mode drops only features redundant in both") {
    MultiStateDataset other = ds;
    other.X(0, 1) += 3.0;  // copy is no longer redundant in the second dataset
    auto [pair, rep] = correlation_filter_intersect(ds, other, 0.9, CorrelationMethod::pearson);
    CHECK(pair.first.p() == 3);
    CHECK(rep.dropped.empty());
    auto [pair2, rep2] = correlation_filter_intersect(ds, ds, 0.9, CorrelationMethod::pearson);
    CHECK(pair2.first.p() == 2);
    REQUIRE(rep2.dropped.size() == 1);
    CHECK(rep2.dropped[0].name == "acopy");
  }
}
