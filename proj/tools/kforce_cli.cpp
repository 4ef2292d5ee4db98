// Command-line front end: simulate campaigns, analyze force series, evaluate
// limit formulas and calibrate the centering noise.
//
// Exit codes: 0 success, 1 I/O failure, 2 configuration or usage error,
// 3 numerical failure.

#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <optional>

#include "kforce/campaign.hpp"
#include "kforce/error.hpp"

namespace {

using namespace kforce;
using nlohmann::json;

constexpr int kExitIo = 1;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

campaign::CampaignConfig load_config(const std::string& path, std::optional<std::uint64_t> seed) {
  auto cfg = path.empty() ? campaign::CampaignConfig::defaults() : campaign::CampaignConfig::load(path);
  if (seed) cfg.seed = *seed;
  cfg.validate();
  return cfg;
}

json analyze(const metrology::MeasurementSeries& s, double dt) {
  const auto curve = metrology::allan_deviation(s, metrology::octave_taus(s));
  json j{{"component", std::string(1, s.label)}, {"samples", s.size()}};
  json adev = json::array();
  for (std::size_t i = 0; i < curve.taus.size(); ++i) {
    adev.push_back({{"tau_s", curve.taus[i]},
                    {"adev_n", curve.adev[i]},
                    {"ci_lo_n", curve.ci_lower[i]},
                    {"ci_hi_n", curve.ci_upper[i]}});
  }
  j["adev"] = adev;
  if (!curve.taus.empty()) {
    j["sensitivity_n_rthz"] = metrology::sensitivity_from_adev(curve, s.cycle_time);
    if (dt > 0.0) j["sensitivity_acting_time_n_rthz"] = curve.adev.front() * std::sqrt(dt);
  }
  std::vector<int> bins;
  for (std::size_t b = 1; 2 * b <= s.size(); b *= 2) bins.push_back(static_cast<int>(b));
  json hist = json::array();
  for (const auto& h : metrology::histogram_stability(s, bins)) {
    hist.push_back({{"bin_size", h.bin_size}, {"stability_n", h.stability}, {"ci_lo_n", h.ci_lower},
                    {"ci_hi_n", h.ci_upper}});
  }
  j["histogram"] = hist;
  if (s.size() >= 50) {
    try {
      const auto n = metrology::normality_diagnostic(s);
      j["normality"] = {{"anderson_darling", n.statistic}, {"pass", n.pass}, {"skewness", n.skewness},
                        {"excess_kurtosis", n.excess_kurtosis}};
    } catch (const DegenerateError&) {
      j["normality"] = "degenerate";
    }
  }
  return j;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reciprocal-space BEC force sensor simulator"};
  app.require_subcommand(1);

  auto* sim = app.add_subcommand("simulate", "Run a simulated measurement campaign");
  std::string mode, config_path, out_dir;
  std::optional<std::uint64_t> seed;
  int workers = 1;
  sim->add_option("mode", mode, "static | scaling | ac")->required()->check(CLI::IsMember({"static", "scaling", "ac"}));
  sim->add_option("--config", config_path, "Key-value campaign config");
  sim->add_option("--seed", seed, "Overrides campaign.seed");
  sim->add_option("--out", out_dir, "Output directory")->required();
  sim->add_option("--workers", workers, "Worker threads")->check(CLI::PositiveNumber);

  auto* ana = app.add_subcommand("analyze", "ADEV / histogram / normality analysis of a force series");
  std::string series_path;
  double tau0 = 0.0, analyze_dt = 0.0;
  ana->add_option("--series", series_path, "CSV with start_time_s,component,force_n")->required();
  ana->add_option("--tau0", tau0, "Cycle time (s)")->required()->check(CLI::PositiveNumber);
  ana->add_option("--dt-s", analyze_dt, "Force acting time for the acting-time sensitivity");

  auto* lim = app.add_subcommand("limits", "Real-space SQL and reciprocal-space quantum limit");
  double mass = 0.0, lim_dt = 0.0, cycle = 76.0;
  std::optional<double> n0, lq;
  lim->add_option("--mass-kg", mass)->required()->check(CLI::PositiveNumber);
  lim->add_option("--dt-s", lim_dt)->required()->check(CLI::PositiveNumber);
  lim->add_option("--n0", n0)->check(CLI::PositiveNumber);
  lim->add_option("--lq-m", lq)->check(CLI::PositiveNumber);
  lim->add_option("--cycle-time-s", cycle, "Cycle time for the QL sensitivity")->check(CLI::PositiveNumber);

  auto* cal = app.add_subcommand("calibrate", "Solve for the centering jitter giving a target per-pair force noise");
  double target = 0.0;
  int cal_cycles = 200;
  cal->add_option("--target-sigma-n", target)->required()->check(CLI::PositiveNumber);
  cal->add_option("--config", config_path, "Key-value campaign config");
  cal->add_option("--seed", seed);
  cal->add_option("--cycles", cal_cycles)->check(CLI::Range(2, 1000000));
  cal->add_option("--workers", workers)->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    if (*sim) {
      const auto cfg = load_config(config_path, seed);
      const campaign::RunOptions opt{workers};
      if (mode == "static") {
        const auto rec = campaign::run_static_campaign(cfg, opt);
        campaign::write_static_report(rec, cfg, out_dir);
        std::cout << campaign::to_json(rec.summary).dump(2) << '\n';
      } else if (mode == "scaling") {
        const auto rep = campaign::run_scaling_campaign(cfg, opt);
        campaign::write_scaling_report(rep, cfg, out_dir);
        std::cout << campaign::to_json(rep).dump(2) << '\n';
      } else {
        const auto rep = campaign::run_ac_campaign(cfg, opt);
        campaign::write_ac_report(rep, cfg, out_dir);
        auto j = campaign::to_json(rep);
        j.erase("samples");
        std::cout << j.dump(2) << '\n';
      }
    } else if (*ana) {
      std::ifstream is(series_path);
      if (!is) throw IoError("cannot open series", series_path);
      json out = json::array();
      for (const auto& s : campaign::read_series_csv(is, tau0)) out.push_back(analyze(s, analyze_dt));
      std::cout << out.dump(2) << '\n';
    } else if (*lim) {
      metrology::PhysicalConstants pc;
      pc.mass = mass;
      json j{{"sql_real_n", metrology::sql_real(pc, lim_dt)},
             {"sql_real_sensitivity_n_rthz", metrology::sql_real_sensitivity(pc, lim_dt)}};
      if (n0 && lq) {
        j["ql_reciprocal_n"] = metrology::ql_reciprocal(pc, *n0, lim_dt, *lq);
        j["ql_reciprocal_sensitivity_n_rthz"] = metrology::ql_reciprocal_sensitivity(pc, *n0, lim_dt, *lq, cycle);
      } else if (n0 || lq) {
        std::cerr << "error: --n0 and --lq-m must be given together\n";
        return kExitConfig;
      }
      std::cout << j.dump(2) << '\n';
    } else if (*cal) {
      const auto cfg = load_config(config_path, seed);
      const auto r = campaign::calibrate_jitter(cfg, target, cal_cycles, 0.01, {workers});
      std::cout << json{{"centering_jitter_k_m_inv", r.centering_jitter_k},
                        {"achieved_sigma_n", r.achieved_sigma_n},
                        {"target_sigma_n", r.target_sigma_n},
                        {"iterations", r.iterations}}
                       .dump(2)
                << '\n';
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ArgumentError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  }
  return 0;
}
