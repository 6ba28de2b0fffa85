// nestfit: command-line driver for data preparation, simulation, nested
// logit estimation and two-segment comparison.
//
// Exit codes: 0 success, 2 input or configuration error, 3 numerical
// non-convergence.

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "nestfit/nestfit.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kInputError = 2;
constexpr int kNotConverged = 3;

unsigned env_threads() {
  if (const char* s = std::getenv("NESTFIT_THREADS")) {
    const int n = std::atoi(s);
    if (n > 0) return static_cast<unsigned>(n);
  }
  return 1;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) nestfit::input_error("cannot write '" + path + "'");
  out << text;
}

struct Common {
  bool deterministic = false;
  std::string null_model = "equal";
  std::string se = "opg";
  std::string iv_param = "direct";
  int max_iterations = 500;
  double tolerance = 1e-6;
  std::string chosen_column = "chosen";

  nestfit::FitOptions fit_options() const {
    nestfit::FitOptions o;
    o.max_iterations = max_iterations;
    o.gradient_tolerance = tolerance;
    o.null_model = null_model == "constants" ? nestfit::NullModel::constants_only : nestfit::NullModel::equal_shares;
    o.se_method = se == "hessian" ? nestfit::SeMethod::numeric_hessian : nestfit::SeMethod::outer_product;
    o.iv_parameterization =
        iv_param == "logistic" ? nestfit::IvParameterization::logistic : nestfit::IvParameterization::direct;
    o.reduction.deterministic = deterministic;
    o.reduction.threads = deterministic ? 1u : env_threads();
    return o;
  }

  std::string canonical() const {
    std::ostringstream s;
    s << "null=" << null_model << ";se=" << se << ";iv=" << iv_param << ";max_iter=" << max_iterations
      << ";tol=" << nestfit::csv::format_double(tolerance) << ";chosen=" << chosen_column
      << ";deterministic=" << deterministic;
    return s.str();
  }
};

void add_fit_flags(CLI::App* cmd, Common& c) {
  cmd->add_option("--null-model", c.null_model, "Null model for pseudo R^2")
      ->check(CLI::IsMember({"equal", "constants"}));
  cmd->add_option("--se", c.se, "Standard error method")->check(CLI::IsMember({"opg", "hessian"}));
  cmd->add_option("--iv-param", c.iv_param, "Inclusive value parameterization")
      ->check(CLI::IsMember({"direct", "logistic"}));
  cmd->add_option("--max-iter", c.max_iterations, "Optimizer iteration limit")->check(CLI::PositiveNumber);
  cmd->add_option("--tol", c.tolerance, "Gradient max-norm tolerance")->check(CLI::PositiveNumber);
  cmd->add_option("--chosen-column", c.chosen_column, "Name of the chosen-alternative column");
}

nestfit::Dataset read_for_model(const std::string& path, const nestfit::ModelSpec& spec, const std::string& chosen) {
  nestfit::DatasetSchema schema;
  schema.chosen_column = chosen;
  for (const auto& a : spec.tree.alternatives) schema.alternatives.push_back(a.id);
  return nestfit::read_dataset_file(path, schema);
}

// Runs body, maps errors onto exit codes and always writes the manifest.
template <class Body>
int run(nestfit::RunManifest& manifest, const std::string& manifest_path, Body&& body) {
  int code = kOk;
  try {
    code = body();
  } catch (const nestfit::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    manifest.error = e.what();
    code = e.kind() == nestfit::ErrorKind::numeric ? kNotConverged : kInputError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    manifest.error = e.what();
    code = kInputError;
  }
  manifest.exit_code = code;
  try {
    manifest.write(manifest_path);
  } catch (const nestfit::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
  }
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Nested logit estimation toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", nestfit::kVersion);
  Common common;
  bool& deterministic = common.deterministic;

  std::string data, model, prep_config, prep_log, params, out;
  std::vector<std::string> compare_data;
  std::size_t n = 0;
  std::uint64_t seed = 0;
  double alpha_t = nestfit::kDefaultAlphaT;
  std::string primary = "larger";
  std::vector<std::string> labels = {"a", "b"};

  auto* prep = app.add_subcommand("prep", "Normalize, expand and screen a raw table");
  prep->add_option("--data", data, "Raw comma-separated input")->required();
  prep->add_option("--prep-config", prep_config, "Prep configuration (JSON)")->required();
  prep->add_option("--out", out, "Prepared output file; the prep-log goes to <out>.preplog")->required();

  auto* replay = app.add_subcommand("replay", "Re-apply a prep-log to a raw table");
  replay->add_option("--data", data, "Raw comma-separated input")->required();
  replay->add_option("--prep-config", prep_config, "Prep configuration (JSON), for the schema")->required();
  replay->add_option("--prep-log", prep_log, "Prep-log written by 'prep'")->required();
  replay->add_option("--out", out, "Prepared output file")->required();

  auto* fitc = app.add_subcommand("fit", "Estimate a nested logit model");
  fitc->add_option("--data", data, "Prepared data")->required();
  fitc->add_option("--model", model, "Model specification (JSON)")->required();
  fitc->add_option("--out", out, "Output prefix")->required();
  fitc->add_flag("--deterministic", deterministic, "Sequential, fixed-order reductions");
  add_fit_flags(fitc, common);

  auto* sim = app.add_subcommand("simulate", "Draw a synthetic dataset from known parameters");
  sim->add_option("--model", model, "Model specification (JSON)")->required();
  sim->add_option("--params", params, "Parameter file (JSON)")->required();
  sim->add_option("--n", n, "Number of rows")->required();
  sim->add_option("--seed", seed, "64-bit seed")->required();
  sim->add_option("--out", out, "Output file")->required();
  sim->add_flag("--deterministic", deterministic, "Accepted for symmetry; simulation is always sequential");

  auto* cmp = app.add_subcommand("compare", "Primary-first two-segment comparison");
  cmp->add_option("--model", model, "Model specification (JSON)")->required();
  cmp->add_option("--data", compare_data, "Segment data files (give twice)")->required()->expected(2);
  cmp->add_option("--out", out, "Output prefix")->required();
  cmp->add_option("--alpha-t", alpha_t, "Significance threshold on |t|")->check(CLI::NonNegativeNumber);
  cmp->add_option("--primary", primary, "Which segment is fitted first")
      ->check(CLI::IsMember({"larger", "first", "second"}));
  cmp->add_option("--labels", labels, "Segment labels")->expected(2)->delimiter(',');
  cmp->add_flag("--deterministic", deterministic, "Sequential, fixed-order reductions");
  add_fit_flags(cmp, common);

  CLI11_PARSE(app, argc, argv);

  nestfit::RunManifest manifest;
  manifest.threads = common.fit_options().reduction.threads;

  if (*prep) {
    manifest.command = "prep";
    manifest.inputs = {data, prep_config};
    manifest.outputs = {out, out + ".preplog"};
    return run(manifest, out + ".manifest.json", [&] {
      const auto cfg = nestfit::prep_config_from_json(nestfit::read_json_file(prep_config));
      auto ds = nestfit::read_dataset_file(data, cfg.schema());
      ds = nestfit::run_prep(std::move(ds), cfg);
      nestfit::write_dataset_file(out, ds);
      std::ofstream log(out + ".preplog", std::ios::binary);
      if (!log) nestfit::input_error("cannot write '" + out + ".preplog'");
      nestfit::write_prep_log(log, ds.provenance);
      return kOk;
    });
  }

  if (*replay) {
    manifest.command = "replay";
    manifest.inputs = {data, prep_config, prep_log};
    manifest.outputs = {out};
    return run(manifest, out + ".manifest.json", [&] {
      const auto cfg = nestfit::prep_config_from_json(nestfit::read_json_file(prep_config));
      std::ifstream in(prep_log);
      if (!in) nestfit::input_error("cannot open prep-log '" + prep_log + "'");
      const auto lines = nestfit::read_prep_log(in);
      auto ds = nestfit::replay_prep(nestfit::read_dataset_file(data, cfg.schema()), lines);
      nestfit::write_dataset_file(out, ds);
      return kOk;
    });
  }

  if (*fitc) {
    manifest.command = "fit";
    manifest.inputs = {data, model};
    manifest.options = common.canonical();
    manifest.deterministic = deterministic;
    manifest.outputs = {out + "_result.json", out + "_table.txt"};
    return run(manifest, out + "_manifest.json", [&] {
      const auto spec = nestfit::read_model_file(model);
      nestfit::require_valid(spec);
      const auto ds = read_for_model(data, spec, common.chosen_column);
      const auto result = nestfit::fit(spec, ds, common.fit_options());
      write_text(out + "_result.json", nestfit::result_to_json(result).dump(2) + "\n");
      write_text(out + "_table.txt", nestfit::format_result_table(result, spec));
      for (const auto& w : result.warnings) std::cerr << "warning: " << w << '\n';
      if (!result.converged) {
        std::cerr << "not converged: " << result.message << '\n';
        for (const auto& s : result.separation)
          std::cerr << "separation: " << s.parameter << " (magnitude " << s.magnitude << ")\n";
        return kNotConverged;
      }
      return kOk;
    });
  }

  if (*sim) {
    manifest.command = "simulate";
    manifest.inputs = {model, params};
    manifest.seed = seed;
    manifest.options = "n=" + std::to_string(n);
    manifest.deterministic = true;
    manifest.outputs = {out};
    return run(manifest, out + ".manifest.json", [&] {
      const auto spec = nestfit::read_model_file(model);
      nestfit::require_valid(spec);
      const auto pf = nestfit::parameter_file_from_json(nestfit::read_json_file(params));
      const auto pv = nestfit::pack_parameters(spec, pf.values);
      const auto ds = nestfit::simulate_dataset(spec, pv, n, seed, pf.covariates);
      nestfit::write_dataset_file(out, ds);
      return kOk;
    });
  }

  if (*cmp) {
    manifest.command = "compare";
    manifest.inputs = {model, compare_data[0], compare_data[1]};
    manifest.options = common.canonical() + ";alpha_t=" + nestfit::csv::format_double(alpha_t) + ";primary=" + primary;
    manifest.deterministic = deterministic;
    manifest.outputs = {out + "_dominant_primary.csv", out + "_dominant_secondary.csv", out + "_report.txt"};
    return run(manifest, out + "_manifest.json", [&] {
      const auto spec = nestfit::read_model_file(model);
      nestfit::require_valid(spec);
      nestfit::Dataset segs[2];
      for (int s = 0; s < 2; ++s) {
        try {
          segs[s] = read_for_model(compare_data[static_cast<std::size_t>(s)], spec, common.chosen_column);
        } catch (const nestfit::Error& e) {
          throw nestfit::Error(e.kind(), "segment '" + labels[static_cast<std::size_t>(s)] + "': " + e.what());
        }
        if (segs[s].rows() == 0)
          nestfit::input_error("segment '" + labels[static_cast<std::size_t>(s)] + "' has no observations");
      }
      nestfit::SegmentOptions so;
      so.fit = common.fit_options();
      so.alpha_t = alpha_t;
      so.primary = primary == "first"    ? nestfit::PrimarySegment::first
                   : primary == "second" ? nestfit::PrimarySegment::second
                                         : nestfit::PrimarySegment::larger;
      so.first_label = labels[0];
      so.second_label = labels[1];
      const auto comparison = nestfit::compare_segments(spec, segs[0], segs[1], so);
      nestfit::gap_report(comparison, out);
      return kOk;
    });
  }
  return kInputError;
}
