#include <fstream>
#include <sstream>

#include "kforce/campaign.hpp"
#include "kforce/error.hpp"

namespace kforce::campaign {
namespace {

using nlohmann::json;

json vec(const Vec2& v) { return json::array({v.x(), v.y()}); }
Vec2 vec_from(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

json adev_json(const metrology::AdevCurve& c) {
  return {{"tau_s", c.taus}, {"adev_n", c.adev}, {"ci_lo_n", c.ci_lower}, {"ci_hi_n", c.ci_upper}, {"edf", c.edf}};
}
metrology::AdevCurve adev_from(const json& j) {
  metrology::AdevCurve c;
  j.at("tau_s").get_to(c.taus);
  j.at("adev_n").get_to(c.adev);
  j.at("ci_lo_n").get_to(c.ci_lower);
  j.at("ci_hi_n").get_to(c.ci_upper);
  j.at("edf").get_to(c.edf);
  return c;
}

json component_json(const ComponentSummary& c) {
  json j{{"label", std::string(1, c.label)},
         {"mean_n", c.mean},
         {"std_n", c.std},
         {"sem_n", c.sem},
         {"fit_sigma_mean_n", c.fit_sigma_mean},
         {"adev", adev_json(c.adev)},
         {"adev_slope", c.adev_slope},
         {"sensitivity_n_rthz", c.sensitivity},
         {"sensitivity_ci_n_rthz", {c.sensitivity_ci.first, c.sensitivity_ci.second}},
         {"sensitivity_acting_time_n_rthz", c.sensitivity_acting_time},
         {"stability_n", c.stability},
         {"stability_tau_s", c.stability_tau}};
  json hist = json::array();
  for (const auto& h : c.histogram) {
    hist.push_back({{"bin_size", h.bin_size},
                    {"n_bins", h.n_bins},
                    {"stability_n", h.stability},
                    {"ci_lo_n", h.ci_lower},
                    {"ci_hi_n", h.ci_upper}});
  }
  j["histogram"] = hist;
  if (c.normality) {
    j["normality"] = {{"anderson_darling", c.normality->statistic},
                      {"pass", c.normality->pass},
                      {"skewness", c.normality->skewness},
                      {"excess_kurtosis", c.normality->excess_kurtosis}};
  }
  return j;
}

ComponentSummary component_from(const json& j) {
  ComponentSummary c;
  c.label = j.at("label").get<std::string>().at(0);
  c.mean = j.at("mean_n");
  c.std = j.at("std_n");
  c.sem = j.at("sem_n");
  c.fit_sigma_mean = j.at("fit_sigma_mean_n");
  c.adev = adev_from(j.at("adev"));
  c.adev_slope = j.at("adev_slope");
  c.sensitivity = j.at("sensitivity_n_rthz");
  c.sensitivity_ci = {j.at("sensitivity_ci_n_rthz").at(0), j.at("sensitivity_ci_n_rthz").at(1)};
  c.sensitivity_acting_time = j.at("sensitivity_acting_time_n_rthz");
  c.stability = j.at("stability_n");
  c.stability_tau = j.at("stability_tau_s");
  for (const auto& h : j.at("histogram")) {
    c.histogram.push_back({h.at("bin_size"), h.at("n_bins"), h.at("stability_n"), h.at("ci_lo_n"), h.at("ci_hi_n")});
  }
  if (j.contains("normality")) {
    const auto& n = j.at("normality");
    c.normality = metrology::NormalityResult{n.at("anderson_darling"), n.at("pass"), n.at("skewness"),
                                             n.at("excess_kurtosis")};
  }
  return c;
}

json plateau_direction(const metrology::DirectionSummary& d) {
  return {{"count", d.count},
          {"mean_n", vec(d.mean)},
          {"std_n", vec(d.std)},
          {"sem_n", vec(d.std_error)},
          {"variance_n2", vec(d.variance)}};
}

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw IoError("cannot open for writing", p.string());
  os.precision(17);
  return os;
}

void write_text(const std::filesystem::path& p, const std::string& text) {
  auto os = open_out(p);
  os << text;
  if (!os) throw IoError("write failed", p.string());
}

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) throw IoError("cannot create output directory", dir.string());
}

}  // namespace

json to_json(const Summary& s) {
  json j{{"schema_version", s.schema_version},
         {"n_cycles", s.n_cycles},
         {"n_excluded", s.n_excluded},
         {"dt_s", s.dt_s},
         {"cycle_time_s", s.cycle_time_s},
         {"mean_force_n", vec(s.mean_force)},
         {"sem_force_n", vec(s.sem_force)},
         {"x", component_json(s.x)},
         {"y", component_json(s.y)}};
  if (s.angle_rad) j["angle_rad"] = *s.angle_rad;
  if (s.angle_sigma_rad) j["angle_sigma_rad"] = *s.angle_sigma_rad;
  if (s.drift) j["drift"] = *s.drift;
  return j;
}

Summary summary_from_json(const json& j) {
  Summary s;
  s.schema_version = j.at("schema_version");
  s.n_cycles = j.at("n_cycles");
  s.n_excluded = j.at("n_excluded");
  s.dt_s = j.at("dt_s");
  s.cycle_time_s = j.at("cycle_time_s");
  s.mean_force = vec_from(j.at("mean_force_n"));
  s.sem_force = vec_from(j.at("sem_force_n"));
  s.x = component_from(j.at("x"));
  s.y = component_from(j.at("y"));
  if (j.contains("angle_rad")) s.angle_rad = j.at("angle_rad").get<double>();
  if (j.contains("angle_sigma_rad")) s.angle_sigma_rad = j.at("angle_sigma_rad").get<double>();
  if (j.contains("drift")) s.drift = j.at("drift").get<std::string>();
  return s;
}

json to_json(const RunRecord& rec) {
  json cycles = json::array();
  for (const auto& c : rec.cycles) {
    cycles.push_back({{"index", c.index},
                      {"timestamp_s", c.timestamp_s},
                      {"dt_s", c.dt_s},
                      {"injected_n", vec(c.injected)},
                      {"dk_m_inv", vec(c.dk)},
                      {"sigma_k_m_inv", vec(c.sigma_k)},
                      {"force_n", vec(c.force)},
                      {"force_sigma_n", vec(c.force_sigma)},
                      {"converged", c.converged}});
  }
  return {{"schema_version", 1},
          {"config_hash", rec.config_hash},
          {"seed", rec.seed},
          {"cycles", cycles},
          {"summary", to_json(rec.summary)}};
}

json to_json(const ScalingReport& r) {
  json rows = json::array();
  for (const auto& row : r.rows) {
    rows.push_back({{"dt_s", row.dt_s},
                    {"seed", row.seed},
                    {"sensitivity_n_rthz", vec(row.sensitivity)},
                    {"sensitivity_lo_n_rthz", vec(row.sensitivity_lo)},
                    {"sensitivity_hi_n_rthz", vec(row.sensitivity_hi)},
                    {"sensitivity_acting_time_n_rthz", vec(row.sensitivity_acting_time)},
                    {"ql_n_rthz", row.ql_sensitivity},
                    {"ql_large_n0_n_rthz", row.ql_sensitivity_large_n0},
                    {"ql_short_prep_n_rthz", row.ql_sensitivity_short_prep},
                    {"n_excluded", row.n_excluded}});
  }
  return {{"schema_version", 1},
          {"config_hash", r.config_hash},
          {"rows", rows},
          {"exponent", vec(r.exponent)},
          {"exponent_sigma", vec(r.exponent_sigma)}};
}

json to_json(const AcReport& r) {
  json samples = json::array();
  for (const auto& s : r.samples) {
    samples.push_back({{"t_s", s.t_s},
                       {"k_mean_m_inv", vec(s.k_mean)},
                       {"k_sem_m_inv", vec(s.k_sem)},
                       {"k_true_m_inv", vec(s.k_true)},
                       {"runs", s.runs}});
  }
  json plateaus = json::array();
  for (const auto& p : r.plateaus.plateaus) {
    plateaus.push_back({{"index", p.index},
                        {"positive", p.positive},
                        {"t_start_s", p.t_start},
                        {"t_end_s", p.t_end},
                        {"force_n", vec(p.force)},
                        {"force_sigma_n", vec(p.force_sigma)}});
  }
  return {{"schema_version", 1},
          {"config_hash", r.config_hash},
          {"n_excluded", r.n_excluded},
          {"frequency_hz", r.plateaus.frequency_hz},
          {"positive", plateau_direction(r.plateaus.positive)},
          {"negative", plateau_direction(r.plateaus.negative)},
          {"plateaus", plateaus},
          {"samples", samples}};
}

void write_series_csv(const RunRecord& rec, std::ostream& os) {
  os.precision(17);
  os << "start_time_s,component,force_n\n";
  for (char comp : {'x', 'y'}) {
    const int c = comp == 'x' ? 0 : 1;
    for (const auto& cy : rec.cycles) {
      if (cy.converged) os << cy.timestamp_s << ',' << comp << ',' << cy.force[c] << '\n';
    }
  }
}

std::vector<metrology::MeasurementSeries> read_series_csv(std::istream& is, double tau0) {
  std::string line;
  if (!std::getline(is, line)) throw ArgumentError("series CSV: empty input");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "start_time_s,component,force_n") throw ArgumentError("series CSV: unexpected header '" + line + "'");
  metrology::MeasurementSeries sx, sy;
  sx.label = 'x';
  sy.label = 'y';
  sx.cycle_time = sy.cycle_time = tau0;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string t, comp, f;
    if (!std::getline(ls, t, ',') || !std::getline(ls, comp, ',') || !std::getline(ls, f)) {
      throw ArgumentError("series CSV line " + std::to_string(lineno) + ": expected three fields");
    }
    auto& s = comp == "x" ? sx : comp == "y" ? sy : throw ArgumentError("series CSV: component must be x or y");
    try {
      s.start_times.push_back(std::stod(t));
      s.values.push_back(std::stod(f));
    } catch (const std::logic_error&) {
      throw ArgumentError("series CSV line " + std::to_string(lineno) + ": bad number");
    }
  }
  std::vector<metrology::MeasurementSeries> out;
  for (auto* s : {&sx, &sy}) {
    if (s->values.empty()) continue;
    s->validate();
    out.push_back(*s);
  }
  if (out.empty()) throw ArgumentError("series CSV: no samples");
  return out;
}

void write_adev_csv(const metrology::AdevCurve& c, std::ostream& os) {
  os.precision(17);
  os << "tau_s,adev_n,ci_lo_n,ci_hi_n\n";
  for (std::size_t i = 0; i < c.taus.size(); ++i) {
    os << c.taus[i] << ',' << c.adev[i] << ',' << c.ci_lower[i] << ',' << c.ci_upper[i] << '\n';
  }
}

void write_static_report(const RunRecord& rec, const CampaignConfig& cfg, const std::filesystem::path& dir) {
  ensure_dir(dir);
  write_text(dir / "config.cfg", cfg.to_text());
  write_text(dir / "record.json", to_json(rec).dump(1) + "\n");
  write_text(dir / "summary.json", to_json(rec.summary).dump(2) + "\n");
  {
    auto os = open_out(dir / "series.csv");
    write_series_csv(rec, os);
  }
  for (const auto* c : {&rec.summary.x, &rec.summary.y}) {
    const std::string tag(1, c->label);
    {
      auto os = open_out(dir / ("adev_" + tag + ".csv"));
      write_adev_csv(c->adev, os);
    }
    auto os = open_out(dir / ("histogram_" + tag + ".csv"));
    os << "bin_size,n_bins,stability_n,ci_lo_n,ci_hi_n\n";
    for (const auto& h : c->histogram) {
      os << h.bin_size << ',' << h.n_bins << ',' << h.stability << ',' << h.ci_lower << ',' << h.ci_upper << '\n';
    }
  }
}

void write_scaling_report(const ScalingReport& rep, const CampaignConfig& cfg, const std::filesystem::path& dir) {
  ensure_dir(dir);
  write_text(dir / "config.cfg", cfg.to_text());
  write_text(dir / "scaling.json", to_json(rep).dump(2) + "\n");
  auto os = open_out(dir / "scaling.csv");
  os << "dt_s,s_x_n_rthz,s_y_n_rthz,s_x_lo,s_x_hi,s_y_lo,s_y_hi,ql_n_rthz,ql_large_n0_n_rthz,ql_short_prep_n_rthz\n";
  for (const auto& r : rep.rows) {
    os << r.dt_s << ',' << r.sensitivity.x() << ',' << r.sensitivity.y() << ',' << r.sensitivity_lo.x() << ','
       << r.sensitivity_hi.x() << ',' << r.sensitivity_lo.y() << ',' << r.sensitivity_hi.y() << ','
       << r.ql_sensitivity << ',' << r.ql_sensitivity_large_n0 << ',' << r.ql_sensitivity_short_prep << '\n';
  }
}

void write_ac_report(const AcReport& rep, const CampaignConfig& cfg, const std::filesystem::path& dir) {
  ensure_dir(dir);
  write_text(dir / "config.cfg", cfg.to_text());
  write_text(dir / "ac.json", to_json(rep).dump(2) + "\n");
  {
    auto os = open_out(dir / "ac_trace.csv");
    os << "t_s,k_x_m_inv,k_y_m_inv,sem_x_m_inv,sem_y_m_inv,k_true_x_m_inv,k_true_y_m_inv\n";
    for (const auto& s : rep.samples) {
      os << s.t_s << ',' << s.k_mean.x() << ',' << s.k_mean.y() << ',' << s.k_sem.x() << ',' << s.k_sem.y() << ','
         << s.k_true.x() << ',' << s.k_true.y() << '\n';
    }
  }
  auto os = open_out(dir / "ac_plateaus.csv");
  os << "index,direction,t_start_s,t_end_s,f_x_n,f_y_n,sigma_x_n,sigma_y_n\n";
  for (const auto& p : rep.plateaus.plateaus) {
    os << p.index << ',' << (p.positive ? '+' : '-') << ',' << p.t_start << ',' << p.t_end << ',' << p.force.x()
       << ',' << p.force.y() << ',' << p.force_sigma.x() << ',' << p.force_sigma.y() << '\n';
  }
}

}  // namespace kforce::campaign
