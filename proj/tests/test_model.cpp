#include <catch_amalgamated.hpp>

#include <algorithm>

#include "support.hpp"

using namespace nestfit;
using support::kSeverity;

namespace {

ModelSpec severity_spec() {
  auto spec = support::severity_constants_spec();
  spec.terms.push_back({"speeding_class1", "speeding", {"severe_injury", "fatality"}});
  spec.terms.push_back({"age_pdo", "age", {"pdo"}});
  return spec;
}

std::vector<ViolationKind> kinds(const ModelSpec& spec) {
  std::vector<ViolationKind> out;
  for (const auto& v : validate_spec(spec)) out.push_back(v.kind);
  return out;
}

bool has(const ModelSpec& spec, ViolationKind k) {
  const auto ks = kinds(spec);
  return std::find(ks.begin(), ks.end(), k) != ks.end();
}

}  // namespace

TEST_CASE("severity tree with table-shaped terms is valid", "[model]") {
  CHECK(validate_spec(severity_spec()).empty());
  CHECK_NOTHROW(require_valid(severity_spec()));
}

TEST_CASE("structural violations are reported", "[model]") {
  SECTION("alternative in two nests") {
    auto spec = severity_spec();
    spec.tree.nests[0].members.push_back("pdo");
    CHECK(has(spec, ViolationKind::partition));
  }
  SECTION("alternative in no nest") {
    auto spec = severity_spec();
    spec.tree.nests[2].members.clear();
    CHECK(has(spec, ViolationKind::partition));
    CHECK(has(spec, ViolationKind::empty_nest));
  }
  SECTION("unknown member") {
    auto spec = severity_spec();
    spec.tree.nests[0].members.push_back("minor");
    CHECK(has(spec, ViolationKind::unknown_member));
  }
  SECTION("nest inside a nest") {
    auto spec = severity_spec();
    spec.tree.nests[0].members.push_back("class2");
    CHECK(has(spec, ViolationKind::deeper_nesting));
  }
  SECTION("free inclusive value on a singleton nest") {
    auto spec = severity_spec();
    spec.tree.nests[2].iv = FreeIv{0.5};
    CHECK(has(spec, ViolationKind::singleton_free_iv));
  }
  SECTION("fixed inclusive value outside (0, 1]") {
    auto spec = severity_spec();
    spec.tree.nests[2].iv = FixedIv{1.5};
    CHECK(has(spec, ViolationKind::fixed_iv_range));
    spec.tree.nests[2].iv = FixedIv{0.0};
    CHECK(has(spec, ViolationKind::fixed_iv_range));
  }
  SECTION("non-positive starting value") {
    auto spec = severity_spec();
    spec.tree.nests[0].iv = FreeIv{0.0};
    CHECK(has(spec, ViolationKind::free_iv_start));
  }
  SECTION("single nest without the plain flag") {
    auto spec = severity_spec();
    spec.tree.nests = {{"all", kSeverity, FreeIv{}}};
    CHECK(has(spec, ViolationKind::too_few_nests));
    spec.tree.plain_mnl = true;
    CHECK_FALSE(has(spec, ViolationKind::too_few_nests));
  }
  SECTION("constant on the base alternative") {
    auto spec = severity_spec();
    spec.terms.push_back({"asc_fatality", std::string(kConstant), {"fatality"}});
    CHECK(has(spec, ViolationKind::constant_on_base));
  }
  SECTION("unknown base") {
    auto spec = severity_spec();
    spec.base_alternative = "minor";
    CHECK(has(spec, ViolationKind::unknown_base));
  }
  SECTION("term problems") {
    auto spec = severity_spec();
    spec.terms.push_back({"x", "x", {}});
    spec.terms.push_back({"y", "y", {"minor"}});
    spec.terms.push_back({"age_pdo", "age", {"pdo"}});
    CHECK(has(spec, ViolationKind::empty_applies_to));
    CHECK(has(spec, ViolationKind::unknown_term_alternative));
    CHECK(has(spec, ViolationKind::duplicate_term));
  }
  SECTION("coefficient named like an inclusive value") {
    auto spec = severity_spec();
    spec.terms.push_back({"iv_class1", "x", {"pdo"}});
    CHECK(has(spec, ViolationKind::name_collision));
  }
  SECTION("duplicates") {
    auto spec = severity_spec();
    spec.tree.alternatives.push_back({"pdo", 5});
    spec.tree.nests.push_back({"class1", {"pdo"}, FixedIv{1.0}});
    CHECK(has(spec, ViolationKind::duplicate_alternative));
    CHECK(has(spec, ViolationKind::duplicate_nest));
  }
}

TEST_CASE("violations come back in a stable order and all at once", "[model]") {
  auto spec = severity_spec();
  spec.tree.nests[2].iv = FixedIv{2.0};
  spec.base_alternative = "minor";
  spec.terms.push_back({"z", "z", {}});
  const auto a = kinds(spec);
  const auto b = kinds(spec);
  CHECK(a == b);
  REQUIRE(a.size() == 3);
  CHECK(a[0] == ViolationKind::fixed_iv_range);
  CHECK(a[1] == ViolationKind::unknown_base);
  CHECK(a[2] == ViolationKind::empty_applies_to);
  try {
    require_valid(spec);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::input);
    const std::string msg = e.what();
    CHECK(msg.find("outside (0, 1]") != std::string::npos);
    CHECK(msg.find("minor") != std::string::npos);
  }
}

TEST_CASE("parameter layout puts betas first and free inclusive values after", "[model]") {
  const auto layout = parameter_layout(severity_spec());
  std::vector<std::string> names;
  for (const auto& s : layout) names.push_back(s.name);
  CHECK(names == std::vector<std::string>{"asc_pdo", "asc_possible_injury", "asc_incapacitating_injury",
                                          "asc_severe_injury", "speeding_class1", "age_pdo", "iv_class1",
                                          "iv_class2"});
  CHECK(layout[6].kind == ParamKind::iv);
  CHECK(layout[6].nest == 0);
  CHECK(layout[7].nest == 1);
}

TEST_CASE("shared coefficients occupy one slot", "[model]") {
  auto spec = severity_spec();
  spec.terms.push_back({"angle", "angle", {"severe_injury"}});
  spec.terms.push_back({"angle", "angle", {"fatality"}});
  CHECK(validate_spec(spec).empty());
  const auto layout = parameter_layout(spec);
  CHECK(std::count_if(layout.begin(), layout.end(), [](const ParamSlot& s) { return s.name == "angle"; }) == 1);
}

TEST_CASE("packing names checks both directions", "[model]") {
  const auto spec = severity_spec();
  auto named = unpack_parameters(start_parameters(spec));
  const auto pv = pack_parameters(spec, named);
  CHECK(pv.at("iv_class1") == 0.5);
  CHECK(pv.at("age_pdo") == 0.0);
  CHECK(pv.beta_count() == 6);

  named.erase("age_pdo");
  named["age_possible"] = 1.0;
  try {
    pack_parameters(spec, named);
    FAIL("expected an error");
  } catch (const Error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("missing [age_pdo]") != std::string::npos);
    CHECK(msg.find("unexpected [age_possible]") != std::string::npos);
  }
}

TEST_CASE("plain multinomial tree", "[model]") {
  ModelSpec spec;
  spec.tree = NestTree::mnl({"a", "b", "c"});
  spec.base_alternative = "c";
  spec.terms = {{"asc_a", std::string(kConstant), {"a"}}};
  CHECK(validate_spec(spec).empty());
  CHECK(spec.tree.free_iv_count() == 0);
}

TEST_CASE("model json round trip and strict keys", "[model]") {
  const auto spec = severity_spec();
  const auto j = model_to_json(spec);
  const auto back = model_from_json(j);
  CHECK(model_to_json(back) == j);
  CHECK(validate_spec(back).empty());

  auto bad = j;
  bad["nests"][0]["lambda"] = 0.3;
  CHECK_THROWS_AS(model_from_json(bad), Error);
  auto both = j;
  both["nests"][0]["iv"] = {{"fixed", 1}, {"free", 0.5}};
  CHECK_THROWS_AS(model_from_json(both), Error);
}

TEST_CASE("bundled model fixtures are valid", "[model]") {
  for (const char* name : {"recovery_model.json", "severity_model.json"}) {
    const auto spec = read_model_file(support::models_dir() + "/" + name);
    CHECK(validate_spec(spec).empty());
  }
  const auto spec = read_model_file(support::models_dir() + "/recovery_model.json");
  const auto pf = parameter_file_from_json(read_json_file(support::models_dir() + "/recovery_params.json"));
  const auto pv = pack_parameters(spec, pf.values);
  CHECK(pv.beta_count() == 10);
  CHECK(pv.at("iv_class1") == 0.4);
  CHECK(pv.at("iv_class2") == 0.3);
}
