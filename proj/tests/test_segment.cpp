#include <catch_amalgamated.hpp>

#include <fstream>

#include "support.hpp"

using namespace nestfit;

namespace {

ModelSpec recovery_spec() { return read_model_file(support::models_dir() + "/recovery_model.json"); }

std::map<std::string, double> recovery_truth() {
  return parameter_file_from_json(read_json_file(support::models_dir() + "/recovery_params.json")).values;
}

EstimationResult fake_result(const std::vector<std::tuple<std::string, double, double>>& rows) {
  EstimationResult r;
  for (const auto& [name, est, t] : rows) {
    ParameterEstimate p;
    p.name = name;
    p.estimate = est;
    p.t_stat = t;
    r.parameters.push_back(p);
  }
  return r;
}

}  // namespace

TEST_CASE("published coefficient pairs give the reported ratios", "[segment]") {
  const auto speeding = coefficient_ratio("speeding_fatal", 0.27, 4.04, 0.14, 1.66);
  REQUIRE(speeding);
  CHECK(std::abs(speeding->ratio - 1.93) < 0.01);
  CHECK(speeding->dominant == Dominance::primary);

  const auto intoxicated = coefficient_ratio("intoxicated_fatal", 0.30, 9.43, 0.37, 7.23);
  REQUIRE(intoxicated);
  CHECK(std::abs(intoxicated->ratio - 0.81) < 0.01);
  CHECK(intoxicated->dominant == Dominance::secondary);

  const auto level = coefficient_ratio("level_curve_pdo", -0.93, -3.34, -2.18, -2.65);
  REQUIRE(level);
  CHECK(std::abs(level->ratio - 0.43) < 0.01);
}

TEST_CASE("ratios need significance on both sides", "[segment]") {
  CHECK_FALSE(coefficient_ratio("x", 0.3, 5.0, 0.2, 1.2));
  CHECK_FALSE(coefficient_ratio("x", 0.3, 1.0, 0.2, 5.0));
  CHECK_FALSE(coefficient_ratio("x", 0.3, std::nan(""), 0.2, 5.0));
  CHECK(coefficient_ratio("x", 0.3, 1.645, 0.2, -1.645));
  CHECK(coefficient_ratio("x", 0.3, 1.2, 0.2, 1.2, 1.0));
}

TEST_CASE("opposite signs are a conflict, not a ratio", "[segment]") {
  const auto r = coefficient_ratio("x", 0.3, 5.0, -0.2, -4.0);
  REQUIRE(r);
  CHECK(r->dominant == Dominance::sign_conflict);
  CHECK(std::isnan(r->ratio));
}

TEST_CASE("restriction keeps constants and significant terms", "[segment]") {
  const auto spec = recovery_spec();
  std::vector<std::tuple<std::string, double, double>> rows;
  for (const auto& s : parameter_layout(spec)) rows.emplace_back(s.name, 0.5, 10.0);
  std::get<2>(rows[4]) = 1.0;  // age_pdo
  std::get<2>(rows[0]) = 0.1;  // asc_pdo stays anyway
  const auto restricted = restrict_spec(spec, fake_result(rows));
  CHECK(restricted.terms.size() == spec.terms.size() - 1);
  CHECK(std::none_of(restricted.terms.begin(), restricted.terms.end(),
                     [](const UtilityTerm& t) { return t.parameter == "age_pdo"; }));
  CHECK(restricted.terms[0].parameter == "asc_pdo");
  CHECK(validate_spec(restricted).empty());

  for (auto& r : rows) std::get<2>(r) = 0.5;
  CHECK_THROWS_AS(restrict_spec(spec, fake_result(rows)), Error);
  CHECK(restrict_spec(spec, fake_result(rows), 0.0).terms.size() == spec.terms.size());
}

TEST_CASE("dominance lists are ordered by distance from one", "[segment]") {
  SegmentedComparison cmp;
  for (auto [name, a, b] : std::vector<std::tuple<std::string, double, double>>{
           {"x1", 1.2, 1.0}, {"x2", 3.0, 1.0}, {"x3", 0.5, 1.0}, {"x4", 0.9, 1.0}, {"x5", 1.5, 1.0}})
    cmp.ratios.push_back(*coefficient_ratio(name, a, 5, b, 5));
  const auto up = cmp.dominant(Dominance::primary);
  const auto down = cmp.dominant(Dominance::secondary);
  REQUIRE(up.size() == 3);
  CHECK(up[0].parameter == "x2");
  CHECK(up[1].parameter == "x5");
  CHECK(up[2].parameter == "x1");
  REQUIRE(down.size() == 2);
  CHECK(down[0].parameter == "x3");
  CHECK(down[1].parameter == "x4");
}

TEST_CASE("gap csv layout", "[segment]") {
  auto r = *coefficient_ratio("speeding_fatal", 0.27, 4.04, 0.14, 1.66);
  r.levels = {"severe_injury", "fatality"};
  CHECK(gap_csv({r}) == "variable,severity_level,ratio\nspeeding_fatal,severe_injury;fatality," +
                            csv::format_double(0.27 / 0.14) + "\n");
  CHECK(gap_csv({}) == "variable,severity_level,ratio\n");
}

TEST_CASE("segments with one doubled coefficient", "[segment]") {
  const auto spec = recovery_spec();
  auto truth = recovery_truth();
  const auto shared = pack_parameters(spec, truth);
  truth["age_pdo"] *= 2.0;
  const auto doubled = pack_parameters(spec, truth);
  const auto a = simulate_dataset(spec, doubled, 30000, 41);
  const auto b = simulate_dataset(spec, shared, 30000, 42);
  SegmentOptions opt;
  opt.first_label = "male";
  opt.second_label = "female";
  const auto cmp = compare_segments(spec, a, b, opt);
  CHECK(cmp.primary_label == "male");
  const auto* r = cmp.find("age_pdo");
  REQUIRE(r);
  CHECK(std::abs(r->ratio - 2.0) < 0.35);
  const auto top = cmp.dominant(Dominance::primary);
  REQUIRE_FALSE(top.empty());
  CHECK(top[0].parameter == "age_pdo");

  const auto dir = support::scratch_dir("segment_report");
  const auto paths = gap_report(cmp, (dir / "gap").string());
  std::ifstream in(paths.dominant_primary);
  std::string header, first;
  std::getline(in, header);
  std::getline(in, first);
  CHECK(header == "variable,severity_level,ratio");
  CHECK(first.rfind("age_pdo,pdo,", 0) == 0);
  std::ifstream rep(paths.report);
  std::string text((std::istreambuf_iterator<char>(rep)), std::istreambuf_iterator<char>());
  CHECK(text.find("Higher in male") != std::string::npos);
}

TEST_CASE("larger segment is primary by default", "[segment]") {
  const auto spec = recovery_spec();
  const auto pv = pack_parameters(spec, recovery_truth());
  const auto small = simulate_dataset(spec, pv, 8000, 43);
  const auto big = simulate_dataset(spec, pv, 12000, 44);
  SegmentOptions opt;
  const auto cmp = compare_segments(spec, small, big, opt);
  CHECK(cmp.primary_label == "b");
  CHECK(cmp.primary_result.sample_size == 12000);
  opt.primary = PrimarySegment::first;
  CHECK(compare_segments(spec, small, big, opt).primary_label == "a");
}

TEST_CASE("segment failures carry the segment label", "[segment]") {
  const auto spec = recovery_spec();
  const auto pv = pack_parameters(spec, recovery_truth());
  const auto good = simulate_dataset(spec, pv, 5000, 45);
  auto bad = good;
  bad.remove("age");
  SegmentOptions opt;
  opt.first_label = "male";
  opt.second_label = "female";
  opt.primary = PrimarySegment::first;
  CHECK_THROWS_WITH(compare_segments(spec, good, bad, opt), Catch::Matchers::ContainsSubstring("segment 'female'"));
}
