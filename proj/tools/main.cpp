#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "maskrgg/divergenceoracle.hpp"
#include "maskrgg/fourierweights.hpp"
#include "maskrgg/gaussmodel.hpp"
#include "maskrgg/parallel.hpp"
#include "maskrgg/signedstats.hpp"
#include "maskrgg/sweepharness.hpp"

namespace {

using namespace maskrgg;

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitInconclusive = 2;
constexpr int kExitFailed = 3;

int exit_for(VerificationStatus status) {
  switch (status) {
    case VerificationStatus::kPass:
      return kExitOk;
    case VerificationStatus::kInconclusive:
      return kExitInconclusive;
    case VerificationStatus::kFail:
      return kExitFailed;
  }
  return kExitFailed;
}

void emit_json(const nlohmann::json& json, const std::string& out) {
  if (out.empty()) {
    std::cout << json.dump(2) << '\n';
    return;
  }
  std::ofstream file(out, std::ios::binary);
  if (!file) throw std::runtime_error("cannot write " + out);
  file << json.dump(2) << '\n';
}

struct Common {
  std::uint64_t seed = 1;
  int threads = 0;
  std::string out;
  std::string format;
};

void add_common(CLI::App* cmd, Common& common, bool with_format, const std::string& default_format) {
  cmd->add_option("--seed", common.seed, "Master seed")->capture_default_str();
  cmd->add_option("--threads", common.threads,
                  "Worker threads (0: MASKRGG_THREADS or hardware)")
      ->capture_default_str();
  cmd->add_option("--out", common.out, "Output path (default: stdout)");
  if (with_format) {
    common.format = default_format;
    cmd->add_option("--format", common.format, "Output format")
        ->check(CLI::IsMember({"csv", "json"}))
        ->capture_default_str();
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Masked bipartite Gaussian random geometric graphs: sampling, tests, oracles"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(version()));

  // sample
  Common sample_common;
  ModelParams sample_params;
  std::string sample_model = "unknown-mask";
  std::string mask_out;
  std::string right_out;
  std::string left_out;
  auto* sample = app.add_subcommand("sample", "Draw one matrix (binary, or CSV for a .csv path)");
  sample->add_option("--n", sample_params.n)->required();
  sample->add_option("--m", sample_params.m)->required();
  sample->add_option("--p", sample_params.p)->required();
  sample->add_option("--q", sample_params.q)->capture_default_str();
  sample->add_option("--d", sample_params.d)->required();
  sample->add_option("--model", sample_model)
      ->check(CLI::IsMember({"unknown-mask", "rgg", "er"}))
      ->capture_default_str();
  sample->add_option("--mask-out", mask_out, "Write the mask here");
  sample->add_option("--right-out", right_out, "Write row latents X_R here");
  sample->add_option("--left-out", left_out, "Write column latents X_L here");
  add_common(sample, sample_common, false, "");
  sample->get_option("--out")->required();

  // stat
  std::string stat_name;
  std::string stat_input;
  std::string stat_mask;
  double stat_p = 0.5;
  std::string stat_format = "text";
  auto* stat = app.add_subcommand("stat", "Evaluate a signed statistic on a matrix file");
  stat->add_option("--statistic", stat_name)->required();
  stat->add_option("--input", stat_input)->required()->check(CLI::ExistingFile);
  stat->add_option("--mask", stat_mask)->check(CLI::ExistingFile);
  stat->add_option("--p", stat_p)->required();
  stat->add_option("--format", stat_format)
      ->check(CLI::IsMember({"text", "json"}))
      ->capture_default_str();

  // test
  Common test_common;
  std::string test_name;
  std::string test_input;
  std::string test_mask;
  double test_p = 0.5;
  int test_null_trials = 2000;
  double test_alpha = 0.05;
  auto* test = app.add_subcommand("test", "Two-sided test of a matrix against the Bern(p) null");
  test->add_option("--statistic", test_name)->required();
  test->add_option("--input", test_input)->required()->check(CLI::ExistingFile);
  test->add_option("--mask", test_mask)->check(CLI::ExistingFile);
  test->add_option("--p", test_p)->required();
  test->add_option("--null-trials", test_null_trials)->capture_default_str();
  test->add_option("--alpha", test_alpha)->capture_default_str();
  add_common(test, test_common, false, "");

  // sweep
  Common sweep_common;
  std::string sweep_config;
  auto* sweep = app.add_subcommand("sweep", "Power grid over (d, q)");
  sweep->add_option("--config", sweep_config)->required()->check(CLI::ExistingFile);
  add_common(sweep, sweep_common, true, "csv");

  // verify-lambda
  Common lambda_common;
  ScalingOptions scaling;
  bool standard_density = false;
  auto* lambda = app.add_subcommand("verify-lambda", "Leading-term residual scaling in d");
  lambda->add_option("--alpha-size", scaling.alpha_size)->capture_default_str();
  lambda->add_option("--d", scaling.d_values, "Dimension grid")->capture_default_str();
  lambda->add_option("--p", scaling.p)->capture_default_str();
  lambda->add_option("--rho", scaling.rho)->capture_default_str();
  lambda->add_option("--draws", scaling.draws)->capture_default_str();
  lambda->add_option("--mc-samples", scaling.mc_samples)->capture_default_str();
  lambda->add_option("--min-ratio", scaling.min_step_ratio)->capture_default_str();
  lambda->add_flag("--standard-density", standard_density,
                   "Use the standard normal density in the leading term");
  add_common(lambda, lambda_common, false, "");

  // verify-stars
  Common stars_common;
  StarOptions stars;
  std::string leaf_mode = "sampled";
  auto* star_cmd = app.add_subcommand("verify-stars", "Unconditional star weight decay in d");
  star_cmd->add_option("--ell", stars.ell)->capture_default_str();
  star_cmd->add_option("--p", stars.p)->capture_default_str();
  star_cmd->add_option("--d", stars.d_values, "Dimension grid")->capture_default_str();
  star_cmd->add_option("--trials", stars.trials)->capture_default_str();
  star_cmd->add_option("--leaves", leaf_mode)
      ->check(CLI::IsMember({"sampled", "analytic"}))
      ->capture_default_str();
  star_cmd->add_option("--min-ratio", stars.min_step_ratio)->capture_default_str();
  add_common(star_cmd, stars_common, false, "");

  // oracle-chi2
  Common oracle_common;
  ModelParams oracle_params{2, 2, 0.5, 1.0, 3};
  OracleOptions oracle;
  auto* oracle_cmd =
      app.add_subcommand("oracle-chi2", "Direct chi-square against the signed-weight sum");
  oracle_cmd->add_option("--n", oracle_params.n)->capture_default_str();
  oracle_cmd->add_option("--m", oracle_params.m)->capture_default_str();
  oracle_cmd->add_option("--p", oracle_params.p)->capture_default_str();
  oracle_cmd->add_option("--q", oracle_params.q)->capture_default_str();
  oracle_cmd->add_option("--d", oracle_params.d)->capture_default_str();
  oracle_cmd->add_option("--outcome-trials", oracle.outcome_trials)->capture_default_str();
  oracle_cmd->add_option("--weight-trials", oracle.weight_trials)->capture_default_str();
  add_common(oracle_cmd, oracle_common, false, "");

  // calibrate-tau
  double cal_p = 0.5;
  int cal_d = 1;
  std::string cal_format = "text";
  auto* cal_cmd = app.add_subcommand("calibrate-tau", "Connection threshold for (p, d)");
  cal_cmd->add_option("--p", cal_p)->required();
  cal_cmd->add_option("--d", cal_d)->required();
  cal_cmd->add_option("--format", cal_format)
      ->check(CLI::IsMember({"text", "json"}))
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (*sample) {
      Rng rng = StreamSeed(sample_common.seed).rng();
      sample_params.validate();
      BitMatrix observed;
      BitMatrix mask;
      LatentMatrix right;
      LatentMatrix left;
      if (sample_model == "er") {
        observed = sample_er(sample_params.n, sample_params.m, sample_params.p, rng);
      } else {
        const Calibration c = calibrate(sample_params.p, sample_params.d);
        if (sample_model == "rgg") {
          RggSample s = sample_rgg(sample_params, c, rng);
          observed = std::move(s.adjacency);
          right = std::move(s.right);
          left = std::move(s.left);
        } else {
          MaskedSample s = sample_unknown_mask_model(sample_params, c, rng);
          observed = std::move(s.observed);
          mask = std::move(s.mask);
          right = std::move(s.right);
          left = std::move(s.left);
        }
      }
      save_bits(sample_common.out, observed);
      if (!mask_out.empty()) {
        if (mask.size() == 0) throw std::invalid_argument("--mask-out needs --model unknown-mask");
        save_bits(mask_out, mask);
      }
      if (!right_out.empty() || !left_out.empty()) {
        if (right.rows() == 0) throw std::invalid_argument("latents need --model rgg or unknown-mask");
        if (!right_out.empty()) save_latents(right_out, right);
        if (!left_out.empty()) save_latents(left_out, left);
      }
      return kExitOk;
    }

    if (*stat) {
      const Statistic s = parse_statistic(stat_name);
      const BitMatrix matrix = load_bits(stat_input);
      BitMatrix mask;
      if (!stat_mask.empty()) mask = load_bits(stat_mask);
      const double value =
          evaluate_statistic(s, matrix, stat_mask.empty() ? nullptr : &mask, stat_p);
      if (stat_format == "json") {
        std::cout << nlohmann::json{{"statistic", stat_name}, {"value", value}, {"p", stat_p}}.dump(2)
                  << '\n';
      } else {
        std::cout << format_double(value) << '\n';
      }
      return kExitOk;
    }

    if (*test) {
      const Statistic s = parse_statistic(test_name);
      const BitMatrix matrix = load_bits(test_input);
      BitMatrix mask;
      if (!test_mask.empty()) mask = load_bits(test_mask);
      const TestReport report =
          run_test(s, matrix, test_mask.empty() ? nullptr : &mask, test_p, test_null_trials,
                   test_alpha, test_common.seed, resolve_threads(test_common.threads));
      emit_json(to_json(report), test_common.out);
      return kExitOk;
    }

    if (*sweep) {
      SweepConfig config = load_sweep_config(sweep_config);
      if (sweep->count("--seed") > 0) config.seed = sweep_common.seed;
      std::string out = sweep_common.out.empty() ? config.output : sweep_common.out;
      if (out.empty()) throw std::invalid_argument("sweep: no output path (--out or config output)");
      const SweepResult result = run_sweep(config, resolve_threads(sweep_common.threads));
      write_sweep_outputs(out, result, parse_output_format(sweep_common.format));
      return kExitOk;
    }

    if (*lambda) {
      scaling.sigma_hat_density = !standard_density;
      scaling.seed = lambda_common.seed;
      scaling.threads = resolve_threads(lambda_common.threads);
      const ScalingReport report = verify_remainder_scaling(scaling);
      emit_json(to_json(report), lambda_common.out);
      return exit_for(report.status);
    }

    if (*star_cmd) {
      stars.mode = parse_leaf_mode(leaf_mode);
      stars.seed = stars_common.seed;
      stars.threads = resolve_threads(stars_common.threads);
      const StarReport report = verify_star_decay(stars);
      emit_json(to_json(report), stars_common.out);
      return exit_for(report.status);
    }

    if (*oracle_cmd) {
      oracle.seed = oracle_common.seed;
      oracle.threads = resolve_threads(oracle_common.threads);
      const OracleReport report = run_chi2_oracle(oracle_params, oracle);
      emit_json(to_json(report), oracle_common.out);
      if (report.contrast.unknown.inconclusive || report.contrast.known.inconclusive) {
        return kExitInconclusive;
      }
      const bool agree = report.unknown_agreement.within_3_sigma &&
                         (!report.has_known || report.known_agreement.within_3_sigma);
      return agree ? kExitOk : kExitFailed;
    }

    if (*cal_cmd) {
      const Calibration c = calibrate(cal_p, cal_d);
      if (cal_format == "json") {
        std::cout << nlohmann::json{{"tau", c.tau}, {"sigma_hat", c.sigma_hat}, {"p", c.p}, {"d", c.d}}
                         .dump(2)
                  << '\n';
      } else {
        std::cout << format_double(c.tau) << '\n';
      }
      return kExitOk;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  }
  return kExitValidation;
}
