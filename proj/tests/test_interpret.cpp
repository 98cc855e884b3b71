#include <doctest.h>

#include "labrisk/interpret.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace labrisk;

namespace {

// Exact permutation p-value for the Mann-Whitney U of tie-free groups:
// enumerate all choose(n1+n2, n1) assignments.
double permutation_p(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> pool = a;
  pool.insert(pool.end(), b.begin(), b.end());
  auto n = pool.size();
  auto n1 = a.size();
  auto u_of = [&](const std::vector<std::size_t>& idx) {
    double u = 0;
    for (std::size_t i : idx)
      for (std::size_t j = 0; j < n; ++j) {
        if (std::find(idx.begin(), idx.end(), j) != idx.end()) continue;
        if (pool[i] > pool[j]) u += 1;
        else if (pool[i] == pool[j]) u += 0.5;
      }
    return u;
  };
  std::vector<std::size_t> obs_idx(n1);
  std::iota(obs_idx.begin(), obs_idx.end(), 0);
  double mu = static_cast<double>(n1 * (n - n1)) / 2.0;
  double obs_dev = std::abs(u_of(obs_idx) - mu);

  std::vector<bool> pick(n, false);
  std::fill(pick.begin(), pick.begin() + static_cast<long>(n1), true);
  std::sort(pick.begin(), pick.end());
  long total = 0, extreme = 0;
  do {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < n; ++i)
      if (pick[i]) idx.push_back(i);
    ++total;
    if (std::abs(u_of(idx) - mu) >= obs_dev - 1e-12) ++extreme;
  } while (std::next_permutation(pick.begin(), pick.end()));
  return static_cast<double>(extreme) / static_cast<double>(total);
}

}  // namespace

TEST_CASE("Mann-Whitney worked examples") {
  auto full = interpret::mann_whitney({4, 5, 6}, {1, 2, 3});
  CHECK(full.u == 9.0);
  CHECK(full.rank_biserial == 1.0);

  auto tied = interpret::mann_whitney({5, 6, 7}, {1, 2, 7});
  CHECK(tied.u == doctest::Approx(6.5).epsilon(1e-12));
  CHECK(tied.rank_biserial == doctest::Approx(4.0 / 9.0).epsilon(1e-12));

  auto same = interpret::mann_whitney({1, 2, 3}, {1, 2, 3});
  CHECK(same.rank_biserial == doctest::Approx(0.0));
  CHECK(same.p_value > 0.9);
}

TEST_CASE("rank-biserial is antisymmetric and bounded") {
  Rng rng(31);
  for (int rep = 0; rep < 30; ++rep) {
    std::vector<double> a, b;
    for (int i = 0; i < 8; ++i) a.push_back(rng.uniform() * 10);
    for (int i = 0; i < 6; ++i) b.push_back(rng.uniform() * 10);
    auto ab = interpret::mann_whitney(a, b);
    auto ba = interpret::mann_whitney(b, a);
    CHECK(ab.rank_biserial == doctest::Approx(-ba.rank_biserial).epsilon(1e-12));
    CHECK(std::abs(ab.rank_biserial) <= 1.0 + 1e-12);
  }
}

TEST_CASE("normal-approximation p tracks exact permutation enumeration") {
  Rng rng(271828);
  int checked = 0;
  while (checked < 12) {
    std::size_t n1 = static_cast<std::size_t>(rng.uniform_range(5, 8));
    std::size_t n2 = static_cast<std::size_t>(rng.uniform_range(5, 8));
    std::vector<double> a, b;
    // Distinct values so the enumeration stays tie-free.
    for (std::size_t i = 0; i < n1; ++i) a.push_back(rng.uniform() + 0.3);
    for (std::size_t i = 0; i < n2; ++i) b.push_back(rng.uniform());
    double exact = permutation_p(a, b);
    if (exact < 0.05 || exact > 0.95) continue;
    auto mw = interpret::mann_whitney(a, b);
    CHECK(mw.p_value == doctest::Approx(exact).epsilon(0).scale(1).epsilon(0.02));
    CHECK(std::abs(mw.p_value - exact) < 0.02);
    ++checked;
  }
}

TEST_CASE("robust z worked example") {
  auto rz = interpret::robust_z({4}, {1, 2, 3, 4, 5});
  CHECK(rz.median == 3.0);
  CHECK(rz.iqr == doctest::Approx(2.0));
  CHECK(rz.z[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK_FALSE(rz.degenerate_spread);

  auto center = interpret::robust_z({3}, {1, 2, 3, 4, 5});
  CHECK(center.z[0] == 0.0);

  auto flat = interpret::robust_z({7, 8}, {5, 5, 5, 5});
  CHECK(flat.degenerate_spread);
  CHECK(flat.z == std::vector<double>{0.0, 0.0});
}

TEST_CASE("interpolated quantiles use the (n-1)q rule") {
  CHECK(interpret::interpolated_quantile({1, 2, 3, 4, 5}, 0.25) == doctest::Approx(2.0));
  CHECK(interpret::interpolated_quantile({1, 2, 3, 4}, 0.5) == doctest::Approx(2.5));
  CHECK(interpret::interpolated_quantile({10}, 0.75) == 10.0);
}

TEST_CASE("categorical test picks chi-square or Fisher appropriately") {
  auto chi = interpret::categorical_test({{10, 20}, {20, 10}});
  CHECK(chi.test == "chi-square");
  CHECK(chi.statistic == doctest::Approx(20.0 / 3.0).epsilon(1e-12));
  CHECK(chi.p_value < 0.01);

  auto fisher = interpret::categorical_test({{3, 0}, {0, 3}});
  CHECK(fisher.test == "Fisher");
  CHECK(fisher.p_value == doctest::Approx(0.10).epsilon(1e-9));

  auto flat = interpret::categorical_test({{5, 5}, {5, 5}});
  CHECK(flat.p_value > 0.99);

  CHECK_THROWS_AS(interpret::categorical_test({{0, 0}, {3, 4}}), DataError);
}

TEST_CASE("Fisher p equals hypergeometric enumeration on random 2x2 tables") {
  auto choose = [](long n, long k) {
    double v = 1;
    for (long i = 0; i < k; ++i) v = v * static_cast<double>(n - i) / static_cast<double>(i + 1);
    return v;
  };
  Rng rng(5150);
  for (int rep = 0; rep < 25; ++rep) {
    long a = rng.uniform_range(0, 4), b = rng.uniform_range(0, 4);
    long c = rng.uniform_range(0, 4), d = rng.uniform_range(0, 4);
    long r1 = a + b, r2 = c + d, c1 = a + c, nn = a + b + c + d;
    if (r1 == 0 || r2 == 0 || c1 == 0 || c1 == nn) continue;
    auto prob = [&](long x) {
      return choose(r1, x) * choose(r2, c1 - x) / choose(nn, c1);
    };
    double p_obs = prob(a), total = 0;
    long lo = std::max(0L, c1 - r2), hi = std::min(r1, c1);
    for (long x = lo; x <= hi; ++x)
      if (prob(x) <= p_obs * (1 + 1e-7)) total += prob(x);
    auto res = interpret::categorical_test({{a, b}, {c, d}});
    if (res.test == "Fisher") CHECK(res.p_value == doctest::Approx(total).epsilon(1e-9));
  }
}

TEST_CASE("baseline table formats median [IQR] and n (%)") {
  dataio::Cohort c;
  c.values = Matrix::Zero(6, 2);
  c.missing_mask = BoolMatrix::Constant(6, 2, false);
  c.values.col(0) << 1, 2, 3, 4, 5, 6;
  c.values.col(1) << 0, 0, 1, 1, 0, 1;
  c.labels = (IntVector(6) << 0, 0, 0, 1, 1, 1).finished();
  c.columns.resize(2);
  c.columns[0].name = "CrXXIV";
  c.columns[0].kind = dataio::ColumnKind::continuous;
  c.columns[1].name = "Sex";
  c.columns[1].kind = dataio::ColumnKind::categorical;
  c.columns[1].categories = {"F", "M"};
  for (int i = 0; i < 6; ++i) c.row_ids.push_back("r" + std::to_string(i));

  auto rows = interpret::baseline_table(c, {"CrXXIV", "Sex"});
  REQUIRE_FALSE(rows.empty());
  CHECK(rows[0].characteristic == "CrXXIV");
  CHECK(rows[0].test == "Mann-Whitney");
  CHECK(rows[0].overall.find('[') != std::string::npos);  // median [Q1, Q3] shape
  bool found_level = false;
  for (const auto& r : rows)
    if (r.characteristic == "Sex" && !r.level.empty()) {
      found_level = true;
      CHECK(r.overall.find('%') != std::string::npos);  // n (%) shape
    }
  CHECK(found_level);
}

TEST_CASE("feature report carries Table-4-style columns and the trend rule") {
  dataio::Cohort c;
  const Eigen::Index n = 40;
  c.values = Matrix::Zero(n, 2);
  c.missing_mask = BoolMatrix::Constant(n, 2, false);
  c.labels = IntVector(n);
  Rng rng(8);
  for (Eigen::Index i = 0; i < n; ++i) {
    int y = i < n / 2 ? 1 : 0;
    c.labels[i] = y;
    c.values(i, 0) = rng.normal() + (y ? 2.0 : 0.0);  // strong upward shift in cases
    c.values(i, 1) = rng.normal();                    // noise
  }
  c.columns.resize(2);
  c.columns[0].name = "CysCVI";
  c.columns[1].name = "NaXII";
  for (auto& col : c.columns) {
    col.kind = dataio::ColumnKind::continuous;
    auto [analyte, week] = dataio::decode_timepoint(col.name);
    col.analyte = analyte;
    col.week = week;
  }
  for (Eigen::Index i = 0; i < n; ++i) c.row_ids.push_back("r" + std::to_string(i));

  interpret::ReportMaps maps;
  maps.alias["CysC"] = "Cystatin C";
  maps.domain["CysC"] = "Renal-urinary";

  Vector importance(2);
  importance << 0.9, 0.1;
  auto rep = interpret::feature_report(importance, {"CysCVI", "NaXII"}, {0, 1}, c, maps, 10);
  REQUIRE(rep.rows.size() == 2);
  CHECK(rep.rows[0].rank == 1);
  CHECK(rep.rows[0].feature_code == "CysCVI");
  CHECK(rep.rows[0].clinical_alias == "Cystatin C at week 6");
  CHECK(rep.rows[0].domain == "Renal-urinary");
  CHECK(rep.rows[0].trend == "higher-in-case");
  CHECK(rep.importance_available);

  // Without importances the report degrades to effect sizes plus a notice.
  auto fallback = interpret::feature_report(std::nullopt, {"CysCVI", "NaXII"}, {0, 1}, c,
                                            maps, 10);
  CHECK_FALSE(fallback.importance_available);
  CHECK_FALSE(fallback.notice.empty());
  CHECK(fallback.rows[0].feature_code == "CysCVI");

  auto text = interpret::format_feature_report_text(rep);
  CHECK(text.find("causality") != std::string::npos);
}
