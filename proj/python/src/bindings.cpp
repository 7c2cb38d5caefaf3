#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "maskrgg/divergenceoracle.hpp"
#include "maskrgg/fourierweights.hpp"
#include "maskrgg/gaussmodel.hpp"
#include "maskrgg/parallel.hpp"
#include "maskrgg/signedstats.hpp"
#include "maskrgg/sweepharness.hpp"

namespace py = pybind11;
using namespace maskrgg;

namespace {

using BitArray = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;
using RealArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

py::object to_python(const nlohmann::json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

nlohmann::json from_python(const py::object& o) {
  return nlohmann::json::parse(py::str(py::module_::import("json").attr("dumps")(o)).cast<std::string>());
}

BitMatrix to_bits(const BitArray& a) {
  if (a.ndim() != 2) throw std::invalid_argument("expected a 2-D 0/1 array");
  const auto rows = static_cast<int>(a.shape(0));
  const auto cols = static_cast<int>(a.shape(1));
  BitMatrix out(rows, cols);
  auto view = a.unchecked<2>();
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) {
      const std::uint8_t v = view(i, j);
      if (v > 1) throw std::invalid_argument("matrix entries must be 0 or 1");
      out.set(i, j, v);
    }
  }
  return out;
}

BitArray to_array(const BitMatrix& m) {
  BitArray out({m.rows(), m.cols()});
  auto view = out.mutable_unchecked<2>();
  for (int i = 0; i < m.rows(); ++i) {
    for (int j = 0; j < m.cols(); ++j) view(i, j) = m(i, j);
  }
  return out;
}

LatentMatrix to_latents(const RealArray& a) {
  if (a.ndim() != 2) throw std::invalid_argument("expected a 2-D latent array (rows x d)");
  LatentMatrix out(a.shape(0), a.shape(1));
  auto view = a.unchecked<2>();
  for (py::ssize_t i = 0; i < a.shape(0); ++i) {
    for (py::ssize_t j = 0; j < a.shape(1); ++j) out(i, j) = view(i, j);
  }
  return out;
}

py::dict estimate_dict(const SignedWeightEstimate& e) {
  return to_python(to_json(e));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Masked bipartite Gaussian random geometric graphs";
  m.attr("__version__") = std::string(version());

  m.def("compute_tau", &compute_tau, py::arg("p"), py::arg("d"),
        "Threshold tau with P(<x, y> / sqrt(d) <= tau) = p.");
  m.def("inner_product_cdf", &inner_product_cdf, py::arg("t"), py::arg("d"));
  m.def(
      "calibrate",
      [](double p, int d) {
        const Calibration c = calibrate(p, d);
        py::dict out;
        out["tau"] = c.tau;
        out["sigma_hat"] = c.sigma_hat;
        out["p"] = c.p;
        out["d"] = c.d;
        return out;
      },
      py::arg("p"), py::arg("d"));

  m.def(
      "sample",
      [](int n, int m_, double p, int d, double q, std::uint64_t seed, const std::string& model) {
        Rng rng = StreamSeed(seed).rng();
        py::dict out;
        if (model == "er") {
          out["observed"] = to_array(sample_er(n, m_, p, rng));
          return out;
        }
        const ModelParams params{n, m_, p, q, d};
        params.validate();
        const Calibration cal = calibrate(p, d);
        if (model == "rgg") {
          const RggSample s = sample_rgg(params, cal, rng);
          out["observed"] = to_array(s.adjacency);
          return out;
        }
        if (model != "unknown-mask") throw std::invalid_argument("unknown model: " + model);
        const MaskedSample s = sample_unknown_mask_model(params, cal, rng);
        out["observed"] = to_array(s.observed);
        out["mask"] = to_array(s.mask);
        out["rgg"] = to_array(s.rgg);
        return out;
      },
      py::arg("n"), py::arg("m"), py::arg("p"), py::arg("d"), py::arg("q") = 1.0,
      py::arg("seed") = 1, py::arg("model") = "unknown-mask",
      "One draw with the same streams as `maskrgg sample`; returns a dict of uint8 arrays.");

  m.def("statistic_names", [] {
    std::vector<std::string> out;
    for (auto name : statistic_names()) out.emplace_back(name);
    return out;
  });
  m.def(
      "statistic",
      [](const std::string& name, const BitArray& matrix, double p,
         const std::optional<BitArray>& mask) {
        const BitMatrix a = to_bits(matrix);
        if (mask) {
          const BitMatrix b = to_bits(*mask);
          return evaluate_statistic(parse_statistic(name), a, &b, p);
        }
        return evaluate_statistic(parse_statistic(name), a, nullptr, p);
      },
      py::arg("name"), py::arg("matrix"), py::arg("p"), py::arg("mask") = py::none());

  m.def(
      "run_test",
      [](const std::string& name, const BitArray& matrix, double p,
         const std::optional<BitArray>& mask, int null_trials, double alpha, std::uint64_t seed,
         int threads) {
        const BitMatrix a = to_bits(matrix);
        std::optional<BitMatrix> b;
        if (mask) b = to_bits(*mask);
        const TestReport r = run_test(parse_statistic(name), a, b ? &*b : nullptr, p, null_trials,
                                      alpha, seed, resolve_threads(threads));
        return to_python(to_json(r));
      },
      py::arg("name"), py::arg("matrix"), py::arg("p"), py::arg("mask") = py::none(),
      py::arg("null_trials") = 2000, py::arg("alpha") = 0.05, py::arg("seed") = 1,
      py::arg("threads") = 0);

  m.def(
      "run_sweep",
      [](const py::object& config, int threads) {
        const SweepConfig c = sweep_config_from_json(from_python(config));
        const SweepResult result = [&] {
          py::gil_scoped_release release;
          return run_sweep(c, resolve_threads(threads));
        }();
        return to_python(results_json(result));
      },
      py::arg("config"), py::arg("threads") = 0,
      "Runs a sweep from a config dict and returns {version, config, cells}.");

  m.def(
      "leading_term_lambda",
      [](const RealArray& x, double p, bool sigma_hat_density) {
        const LatentMatrix latents = to_latents(x);
        return leading_term_lambda(latents, calibrate(p, static_cast<int>(latents.dim())),
                                   sigma_hat_density);
      },
      py::arg("x_alpha"), py::arg("p"), py::arg("sigma_hat_density") = true);
  m.def(
      "conditional_star_sw_exact2",
      [](const RealArray& x, double p) {
        const LatentMatrix latents = to_latents(x);
        return estimate_dict(
            conditional_star_sw_exact2(latents, calibrate(p, static_cast<int>(latents.dim()))));
      },
      py::arg("x_alpha"), py::arg("p"));
  m.def(
      "conditional_star_sw_mc",
      [](const RealArray& x, double p, std::int64_t samples, std::uint64_t seed, int threads) {
        const LatentMatrix latents = to_latents(x);
        return estimate_dict(conditional_star_sw_mc(latents,
                                                    calibrate(p, static_cast<int>(latents.dim())),
                                                    samples, StreamSeed(seed),
                                                    resolve_threads(threads)));
      },
      py::arg("x_alpha"), py::arg("p"), py::arg("samples") = 1'000'000, py::arg("seed") = 1,
      py::arg("threads") = 0);

  m.def(
      "verify_remainder_scaling",
      [](int alpha_size, std::vector<int> d_values, double p, double rho, int draws,
         std::int64_t mc_samples, std::uint64_t seed, int threads) {
        ScalingOptions o;
        o.alpha_size = alpha_size;
        o.d_values = std::move(d_values);
        o.p = p;
        o.rho = rho;
        o.draws = draws;
        o.mc_samples = mc_samples;
        o.seed = seed;
        o.threads = resolve_threads(threads);
        const ScalingReport r = [&] {
          py::gil_scoped_release release;
          return verify_remainder_scaling(o);
        }();
        return to_python(to_json(r));
      },
      py::arg("alpha_size") = 2, py::arg("d_values") = std::vector<int>{64, 256, 1024},
      py::arg("p") = 0.3, py::arg("rho") = 3.0, py::arg("draws") = 50,
      py::arg("mc_samples") = 1'000'000, py::arg("seed") = 1, py::arg("threads") = 0);

  m.def(
      "verify_star_decay",
      [](int ell, double p, std::vector<int> d_values, std::int64_t trials, const std::string& mode,
         std::uint64_t seed, int threads) {
        StarOptions o;
        o.ell = ell;
        o.p = p;
        o.d_values = std::move(d_values);
        o.trials = trials;
        o.mode = parse_leaf_mode(mode);
        o.seed = seed;
        o.threads = resolve_threads(threads);
        const StarReport r = [&] {
          py::gil_scoped_release release;
          return verify_star_decay(o);
        }();
        return to_python(to_json(r));
      },
      py::arg("ell") = 2, py::arg("p") = 0.5, py::arg("d_values") = std::vector<int>{100, 400},
      py::arg("trials") = 10'000'000, py::arg("mode") = "sampled", py::arg("seed") = 1,
      py::arg("threads") = 0);

  m.def(
      "run_chi2_oracle",
      [](int n, int m_, double p, double q, int d, std::int64_t outcome_trials,
         std::int64_t weight_trials, std::uint64_t seed, int threads) {
        OracleOptions o;
        o.outcome_trials = outcome_trials;
        o.weight_trials = weight_trials;
        o.seed = seed;
        o.threads = resolve_threads(threads);
        const ModelParams params{n, m_, p, q, d};
        const OracleReport r = [&] {
          py::gil_scoped_release release;
          return run_chi2_oracle(params, o);
        }();
        return to_python(to_json(r));
      },
      py::arg("n") = 2, py::arg("m") = 2, py::arg("p") = 0.5, py::arg("q") = 1.0, py::arg("d") = 3,
      py::arg("outcome_trials") = 2'000'000, py::arg("weight_trials") = 1'000'000,
      py::arg("seed") = 1, py::arg("threads") = 0);
}
