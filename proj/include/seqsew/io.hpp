#pragma once

#include <seqsew/batch.hpp>
#include <seqsew/bounds.hpp>
#include <seqsew/core.hpp>
#include <seqsew/datagen.hpp>
#include <seqsew/forecasters.hpp>
#include <seqsew/posterior.hpp>

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace seqsew {

using Json = nlohmann::ordered_json;

struct IoError : Error {
  using Error::Error;
};

inline constexpr std::string_view kRunCsvSchema = "seqsew.run/v1";
inline constexpr std::string_view kDataCsvSchema = "seqsew.data/v1";
inline constexpr std::string_view kReplicationCsvSchema = "seqsew.batch_replications/v1";
inline constexpr std::string_view kConfigSchema = "seqsew.config/v1";
inline constexpr std::string_view kSummarySchema = "seqsew.run_summary/v1";
inline constexpr std::string_view kBoundReportSchema = "seqsew.bound_report/v1";
inline constexpr std::string_view kBatchSchema = "seqsew.batch/v1";
inline constexpr std::string_view kCloudSchema = "seqsew.cloud/v1";

/// Shortest decimal text that round-trips the double ("nan", "inf", "-inf" for
/// non-finite values).
inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  for (int precision = 15; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof buf, "%.*g", precision, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

/// JSON has no non-finite numbers; those are written as strings.
inline Json json_number(double v) {
  if (std::isfinite(v)) return v;
  return format_number(v);
}

inline double json_to_double(const Json& j, const std::string& what) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const std::string s = j.get<std::string>();
    if (s == "inf") return kInf;
    if (s == "-inf") return -kInf;
    if (s == "nan") return kNaN;
  }
  throw ArgumentError(what + ": expected a number");
}

inline Json json_vector(const Vector& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(json_number(v[i]));
  return out;
}

inline Vector vector_from_json(const Json& j, const std::string& what) {
  if (!j.is_array()) throw ArgumentError(what + ": expected an array of numbers");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = json_to_double(j[i], what);
  return v;
}

// ---------------------------------------------------------------------------
// Files

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << content;
  out.flush();
  if (!out) throw IoError("failed writing '" + path + "'");
}

inline Json parse_json(const std::string& text, const std::string& origin) {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError(origin + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Configuration

inline NoiseFamily noise_from_json(const Json& j) {
  if (j.is_null()) return NoiseFamily::none();
  const std::string family = j.value("family", std::string("none"));
  auto num = [&](const char* key) {
    if (!j.contains(key)) throw ArgumentError("noise " + family + ": missing '" + key + "'");
    return json_to_double(j.at(key), std::string("noise.") + key);
  };
  NoiseFamily n;
  if (family == "none") n = NoiseFamily::none();
  else if (family == "BD") n = NoiseFamily::bounded(num("B"));
  else if (family == "SG") n = NoiseFamily::subgaussian(j.contains("sigma") ? std::pow(num("sigma"), 2.0) : num("sigma2"));
  else if (family == "BEM") n = NoiseFamily::exp_moment(num("alpha"), num("M"));
  else if (family == "BM") n = NoiseFamily::bounded_moment(num("alpha"), num("M"));
  else throw ArgumentError("unknown noise family '" + family + "' (expected none, BD, SG, BEM or BM)");
  n.validate();
  return n;
}

inline Json noise_to_json(const NoiseFamily& n) {
  Json j;
  j["family"] = n.name();
  switch (n.kind) {
    case NoiseKind::none: break;
    case NoiseKind::bounded: j["B"] = n.B; break;
    case NoiseKind::subgaussian: j["sigma2"] = n.sigma2; break;
    case NoiseKind::exp_moment:
    case NoiseKind::bounded_moment:
      j["alpha"] = n.alpha;
      j["M"] = n.M;
      break;
  }
  return j;
}

inline ScenarioSpec scenario_from_json(const Json& j) {
  if (!j.is_object()) throw ArgumentError("config: 'scenario' must be an object");
  ScenarioSpec s;
  s.T = j.value("T", s.T);
  s.d = j.value("d", s.d);
  s.dictionary = dictionary_from_string(j.value("dictionary", std::string("coordinate")));
  if (j.contains("normalization")) s.normalization = vector_from_json(j.at("normalization"), "scenario.normalization");
  s.s = j.value("s", -1);
  s.u_true = j.contains("u_true") ? vector_from_json(j.at("u_true"), "scenario.u_true") : Vector::Zero(s.d);
  s.design = design_from_string(j.value("design", std::string("iid_uniform")));
  s.grid_points = j.value("grid_points", s.grid_points);
  if (j.contains("script")) {
    for (const auto& seg : j.at("script")) {
      s.script.push_back({seg.value("from", 1), seg.value("amplitude", 1.0), seg.value("feature_scale", 1.0)});
    }
  }
  s.noise = noise_from_json(j.contains("noise") ? j.at("noise") : Json());
  s.seed = j.value("seed", s.seed);
  if (j.contains("design_seed")) s.design_seed = j.at("design_seed").get<std::uint64_t>();
  s.validate();
  return s;
}

inline BackendConfig backend_from_json(const Json& j) {
  BackendConfig b;
  if (j.is_null()) return b;
  b.kind = backend_from_string(j.value("kind", std::string(to_string(b.kind))));
  b.n_samples = j.value("n_samples", b.n_samples);
  b.burn_in = j.value("burn_in", b.burn_in);
  b.proposal_scale = j.value("proposal_scale", b.proposal_scale);
  b.ess_floor = j.value("ess_floor", b.ess_floor);
  b.grid_points_per_dim = j.value("grid_points_per_dim", b.grid_points_per_dim);
  b.grid_radius_multiplier = j.value("grid_radius_multiplier", b.grid_radius_multiplier);
  b.grid_radius_hint = j.value("grid_radius_hint", b.grid_radius_hint);
  b.seed = j.value("seed", b.seed);
  return b;
}

inline Json backend_to_json(const BackendConfig& b) {
  Json j;
  j["kind"] = std::string(to_string(b.kind));
  j["n_samples"] = b.n_samples;
  j["burn_in"] = b.burn_in;
  j["proposal_scale"] = b.proposal_scale;
  j["ess_floor"] = b.ess_floor;
  j["grid_points_per_dim"] = b.grid_points_per_dim;
  j["grid_radius_multiplier"] = b.grid_radius_multiplier;
  j["grid_radius_hint"] = b.grid_radius_hint;
  j["seed"] = b.seed;
  return j;
}

/// Forecaster choice. Tunings that depend on the data ("rules") are resolved
/// against the generated sequence before the run:
///  - adaptive tau_rule: "value" (use tau), "inv_sqrt_dT", "inv_sqrt_gram";
///  - fixed tuning: "manual" (use B, eta, tau) or "cor3" (B = max|y|,
///    eta = 1/(8B^2), tau = sqrt(16B^2 / gram)).
struct ForecasterSpec {
  ForecasterKind kind = ForecasterKind::adaptive;
  double B = kNaN;
  double eta = kNaN;
  double tau = kNaN;
  double lambda = 1.0;
  std::string rule = "value";
};

inline ForecasterSpec forecaster_from_json(const Json& j) {
  ForecasterSpec f;
  if (j.is_null()) {
    f.rule = "inv_sqrt_dT";
    return f;
  }
  const std::string kind = j.value("kind", std::string("adaptive"));
  if (kind == "fixed") {
    f.kind = ForecasterKind::fixed;
    f.rule = j.value("tuning", std::string("manual"));
    if (f.rule != "manual" && f.rule != "cor3") throw ArgumentError("forecaster.tuning must be 'manual' or 'cor3'");
    if (f.rule == "manual") {
      for (const char* key : {"B", "eta", "tau"})
        if (!j.contains(key)) throw ArgumentError(std::string("fixed forecaster: missing '") + key + "'");
      f.B = json_to_double(j.at("B"), "forecaster.B");
      f.eta = json_to_double(j.at("eta"), "forecaster.eta");
      f.tau = json_to_double(j.at("tau"), "forecaster.tau");
    }
  } else if (kind == "adaptive") {
    f.kind = ForecasterKind::adaptive;
    f.rule = j.value("tau_rule", std::string(j.contains("tau") ? "value" : "inv_sqrt_dT"));
    if (f.rule != "value" && f.rule != "inv_sqrt_dT" && f.rule != "inv_sqrt_gram")
      throw ArgumentError("forecaster.tau_rule must be 'value', 'inv_sqrt_dT' or 'inv_sqrt_gram'");
    if (f.rule == "value") {
      if (!j.contains("tau")) throw ArgumentError("adaptive forecaster: missing 'tau'");
      f.tau = json_to_double(j.at("tau"), "forecaster.tau");
    }
  } else if (kind == "auto") {
    f.kind = ForecasterKind::automatic;
  } else if (kind == "ridge") {
    f.kind = ForecasterKind::ridge;
    f.lambda = j.value("lambda", 1.0);
  } else {
    throw ArgumentError("unknown forecaster kind '" + kind + "' (expected fixed, adaptive, auto or ridge)");
  }
  return f;
}

/// Resolves data-dependent tuning rules into concrete parameters.
inline Tuning resolve_tuning(const ForecasterSpec& f, const FeatureSequence& seq) {
  const SequenceStats st = SequenceStats::of(seq);
  Tuning t;
  t.forecaster = f.kind;
  switch (f.kind) {
    case ForecasterKind::fixed:
      if (f.rule == "cor3") {
        t.B = std::sqrt(st.max_y_sq);
        require(t.B > 0.0, "cor3 tuning needs a nonzero observation");
        require(st.gram_trace > 0.0, "cor3 tuning needs nonzero features");
        t.eta = 1.0 / (8.0 * t.B * t.B);
        t.tau = std::sqrt(16.0 * t.B * t.B / st.gram_trace);
      } else {
        t.B = f.B;
        t.eta = f.eta;
        t.tau = f.tau;
      }
      break;
    case ForecasterKind::adaptive:
      if (f.rule == "inv_sqrt_dT") {
        t.tau = 1.0 / std::sqrt(static_cast<double>(seq.dim()) * static_cast<double>(seq.rounds()));
      } else if (f.rule == "inv_sqrt_gram") {
        require(st.gram_trace > 0.0, "tau_rule inv_sqrt_gram needs nonzero features");
        t.tau = 1.0 / std::sqrt(st.gram_trace);
      } else {
        t.tau = f.tau;
      }
      break;
    case ForecasterKind::automatic:
    case ForecasterKind::ridge:
      break;
  }
  return t;
}

struct VerifySpec {
  std::vector<std::string> bounds{"prop5"};
  int replays = 10;
  std::vector<int> sparsity_levels{0, 1, -1};  // -1: s = d
  bool allow_approximate = true;
};

struct BatchSpec {
  std::string variant = "thm10";
  int replications = 20;
  int n_eval = 500;
  double shift = 3.0;  // remark15 translation check
  std::vector<double> sigmas;  // optional SG noise sweep
};

struct RunConfig {
  ScenarioSpec scenario;
  ForecasterSpec forecaster;
  BackendConfig backend;
  VerifySpec verify;
  BatchSpec batch;
  std::string out_dir = "out";
};

inline RunConfig config_from_json(const Json& j) {
  if (!j.is_object()) throw ArgumentError("config: top level must be an object");
  if (j.contains("schema") && j.at("schema") != std::string(kConfigSchema))
    throw ArgumentError("config: unsupported schema " + j.at("schema").dump());
  RunConfig c;
  if (!j.contains("scenario")) throw ArgumentError("config: missing 'scenario'");
  c.scenario = scenario_from_json(j.at("scenario"));
  c.forecaster = forecaster_from_json(j.contains("forecaster") ? j.at("forecaster") : Json());
  c.backend = backend_from_json(j.contains("backend") ? j.at("backend") : Json());
  if (j.contains("seed")) {
    const auto seed = j.at("seed").get<std::uint64_t>();
    c.scenario.seed = seed;
    c.backend.seed = seed;
  }
  if (j.contains("verify")) {
    const Json& v = j.at("verify");
    if (v.contains("bounds")) c.verify.bounds = v.at("bounds").get<std::vector<std::string>>();
    c.verify.replays = v.value("replays", c.verify.replays);
    if (v.contains("sparsity_levels")) {
      c.verify.sparsity_levels.clear();
      for (const auto& s : v.at("sparsity_levels"))
        c.verify.sparsity_levels.push_back(s.is_string() && s.get<std::string>() == "d" ? -1 : s.get<int>());
    }
    c.verify.allow_approximate = v.value("allow_approximate", c.verify.allow_approximate);
  }
  if (j.contains("batch")) {
    const Json& b = j.at("batch");
    c.batch.variant = b.value("variant", c.batch.variant);
    c.batch.replications = b.value("replications", c.batch.replications);
    c.batch.n_eval = b.value("n_eval", c.batch.n_eval);
    c.batch.shift = b.value("shift", c.batch.shift);
    if (b.contains("sigmas")) c.batch.sigmas = b.at("sigmas").get<std::vector<double>>();
  }
  if (j.contains("outputs")) c.out_dir = j.at("outputs").value("dir", c.out_dir);
  return c;
}

// ---------------------------------------------------------------------------
// Writers

inline std::string run_csv(const std::vector<RoundRecord>& records) {
  std::string out = "# schema: " + std::string(kRunCsvSchema) + "\n";
  out += "t,y,yhat,loss,cumloss,B_t,eta_t,regime,ess\n";
  for (const auto& r : records) {
    out += std::to_string(r.t) + ',' + format_number(r.y) + ',' + format_number(r.yhat) + ',' +
           format_number(r.loss) + ',' + format_number(r.cumloss) + ',' + format_number(r.B) + ',' +
           format_number(r.eta) + ',' + std::to_string(r.regime) + ',' + format_number(r.ess) + '\n';
  }
  return out;
}

inline std::string data_csv(const Dataset& data) {
  std::string out = "# schema: " + std::string(kDataCsvSchema) + "\n";
  out += "t";
  for (Eigen::Index j = 0; j < data.x.cols(); ++j) out += ",x_" + std::to_string(j + 1);
  out += ",y\n";
  for (int t = 0; t < data.rounds(); ++t) {
    out += std::to_string(t + 1);
    for (Eigen::Index j = 0; j < data.x.cols(); ++j) out += ',' + format_number(data.x(t, j));
    out += ',' + format_number(data.y[t]) + '\n';
  }
  return out;
}

inline Json bound_report_json(const BoundReport& r) {
  Json j;
  j["schema"] = std::string(kBoundReportSchema);
  j["bound"] = r.bound;
  j["lhs"] = json_number(r.lhs);
  j["rhs"] = json_number(r.rhs);
  j["slack"] = json_number(r.slack);
  j["mc_allowance"] = json_number(r.mc_allowance);
  j["witness_u"] = json_vector(r.witness_u);
  j["pass"] = r.pass;
  j["ambiguous"] = r.ambiguous;
  return j;
}

inline Json batch_result_json(const BatchExperimentResult& r) {
  Json j;
  j["schema"] = std::string(kBatchSchema);
  j["variant"] = std::string(to_string(r.variant));
  j["T"] = r.T;
  j["d"] = r.d;
  j["family"] = r.family;
  j["measured_risk"] = json_number(r.measured_risk);
  j["risk_std_error"] = json_number(r.risk_std_error);
  j["rhs"] = json_number(r.rhs);
  j["amplitude_source"] = r.amplitude_source;
  j["witness"] = json_vector(r.witness);
  j["pass"] = r.pass;
  return j;
}

/// Samples, log-weights and cached clipped losses of a cloud.
inline Json cloud_json(const PosteriorCloud& cloud) {
  Json j;
  j["schema"] = std::string(kCloudSchema);
  j["backend"] = std::string(to_string(cloud.backend()));
  j["tau"] = cloud.prior().tau();
  j["dim"] = cloud.dim();
  j["eta"] = json_number(cloud.eta());
  j["rounds"] = cloud.rounds();
  Json samples = Json::array();
  for (Eigen::Index i = 0; i < cloud.size(); ++i) {
    Json s;
    s["u"] = json_vector(cloud.points().row(i).transpose());
    s["log_weight"] = json_number(cloud.log_weights()[i]);
    s["cum_clipped_loss"] = json_number(cloud.cum_clipped_loss()[i]);
    samples.push_back(std::move(s));
  }
  j["samples"] = std::move(samples);
  return j;
}

// ---------------------------------------------------------------------------
// CSV reading

struct CsvTable {
  std::string schema;
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  int column(const std::string& name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    return it == header.end() ? -1 : static_cast<int>(it - header.begin());
  }
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

/// Parses a CSV written by this library. Errors name the offending line.
inline CsvTable parse_csv(const std::string& text, const std::string& origin) {
  CsvTable table;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      const std::string tag = "# schema: ";
      if (line.rfind(tag, 0) == 0) table.schema = line.substr(tag.size());
      continue;
    }
    const auto cells = split_csv_line(line);
    if (table.header.empty()) {
      table.header = cells;
      continue;
    }
    if (cells.size() != table.header.size()) {
      throw IoError(origin + ": parse error at line " + std::to_string(line_no) + ": expected " +
                    std::to_string(table.header.size()) + " fields, found " + std::to_string(cells.size()));
    }
    std::vector<double> row;
    row.reserve(cells.size());
    for (const auto& c : cells) {
      char* end = nullptr;
      const double v = std::strtod(c.c_str(), &end);
      if (c.empty() || end != c.c_str() + c.size()) {
        throw IoError(origin + ": parse error at line " + std::to_string(line_no) + ": '" + c + "' is not a number");
      }
      row.push_back(v);
    }
    table.rows.push_back(std::move(row));
  }
  if (table.header.empty()) throw IoError(origin + ": parse error: no header line");
  return table;
}

// ---------------------------------------------------------------------------
// SVG charts

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  bool steps = false;
};

namespace detail {

inline std::string svg_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

inline std::string fmt2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

inline const char* palette(std::size_t i) {
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
  return colors[i % 6];
}

constexpr double kWidth = 720, kHeight = 440, kLeft = 80, kRight = 20, kTop = 40, kBottom = 60;

inline std::string frame(const std::string& title, const std::string& xlabel, const std::string& ylabel, double x0,
                         double x1, double y0, double y1) {
  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"720\" height=\"440\" viewBox=\"0 0 720 440\">\n";
  s += "<rect width=\"720\" height=\"440\" fill=\"white\"/>\n";
  s += "<text x=\"360\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">" +
       svg_escape(title) + "</text>\n";
  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  s += "<rect x=\"" + fmt2(kLeft) + "\" y=\"" + fmt2(kTop) + "\" width=\"" + fmt2(pw) + "\" height=\"" + fmt2(ph) +
       "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double fx = kLeft + pw * k / 4.0, fy = kTop + ph * (1.0 - k / 4.0);
    s += "<text x=\"" + fmt2(fx) + "\" y=\"" + fmt2(kTop + ph + 18) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" +
         tick_label(x0 + (x1 - x0) * k / 4.0) + "</text>\n";
    s += "<text x=\"" + fmt2(kLeft - 6) + "\" y=\"" + fmt2(fy + 4) +
         "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" + tick_label(y0 + (y1 - y0) * k / 4.0) +
         "</text>\n";
  }
  s += "<text x=\"" + fmt2(kLeft + pw / 2) + "\" y=\"" + fmt2(kHeight - 16) +
       "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">" + svg_escape(xlabel) + "</text>\n";
  s += "<text x=\"18\" y=\"" + fmt2(kTop + ph / 2) + "\" transform=\"rotate(-90 18 " + fmt2(kTop + ph / 2) +
       ")\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">" + svg_escape(ylabel) + "</text>\n";
  return s;
}

inline void padded_range(double& lo, double& hi) {
  if (!(hi > lo)) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double pad = 0.05 * (hi - lo);
  lo -= pad;
  hi += pad;
}

}  // namespace detail

/// Line chart of several series sharing axes.
inline std::string svg_line_chart(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                                  const std::vector<Series>& series) {
  double x0 = kInf, x1 = -kInf, y0 = kInf, y1 = -kInf;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  detail::padded_range(y0, y1);
  if (!(x1 > x0)) x1 = x0 + 1;
  using namespace detail;
  std::string svg = frame(title, xlabel, ylabel, x0, x1, y0, y1);
  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  auto px = [&](double x) { return kLeft + pw * (x - x0) / (x1 - x0); };
  auto py = [&](double y) { return kTop + ph * (1.0 - (y - y0) / (y1 - y0)); };
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    std::string pts;
    double prev_y = kNaN;
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      if (s.steps && std::isfinite(prev_y)) pts += fmt2(px(s.x[i])) + "," + fmt2(py(prev_y)) + " ";
      pts += fmt2(px(s.x[i])) + "," + fmt2(py(s.y[i])) + " ";
      prev_y = s.y[i];
    }
    svg += "<polyline fill=\"none\" stroke=\"" + std::string(palette(k)) + "\" stroke-width=\"1.5\" points=\"" + pts +
           "\"/>\n";
    svg += "<text x=\"" + fmt2(kLeft + 10) + "\" y=\"" + fmt2(kTop + 16 + 14 * k) + "\" fill=\"" +
           std::string(palette(k)) + "\" font-family=\"sans-serif\" font-size=\"12\">" + svg_escape(s.label) +
           "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

struct Bar {
  std::string label;
  double value;
};

/// Bar chart; negative bars are drawn in red.
inline std::string svg_bar_chart(const std::string& title, const std::string& ylabel, const std::vector<Bar>& bars) {
  using namespace detail;
  double y0 = 0.0, y1 = 0.0;
  for (const auto& b : bars) {
    if (!std::isfinite(b.value)) continue;
    y0 = std::min(y0, b.value);
    y1 = std::max(y1, b.value);
  }
  padded_range(y0, y1);
  std::string svg = frame(title, "", ylabel, 0, static_cast<double>(bars.size()), y0, y1);
  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  auto py = [&](double y) { return kTop + ph * (1.0 - (y - y0) / (y1 - y0)); };
  const double slot = bars.empty() ? pw : pw / static_cast<double>(bars.size());
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const double v = std::isfinite(bars[i].value) ? bars[i].value : 0.0;
    const double top = py(std::max(v, 0.0)), bottom = py(std::min(v, 0.0));
    const double x = kLeft + slot * (i + 0.15);
    svg += "<rect x=\"" + fmt2(x) + "\" y=\"" + fmt2(top) + "\" width=\"" + fmt2(slot * 0.7) + "\" height=\"" +
           fmt2(bottom - top) + "\" fill=\"" + (v >= 0 ? "#2ca02c" : "#d62728") + "\"/>\n";
    svg += "<text x=\"" + fmt2(x + slot * 0.35) + "\" y=\"" + fmt2(kTop + ph + 34) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">" + svg_escape(bars[i].label) +
           "</text>\n";
  }
  svg += "<line x1=\"" + fmt2(kLeft) + "\" x2=\"" + fmt2(kLeft + pw) + "\" y1=\"" + fmt2(py(0)) + "\" y2=\"" +
         fmt2(py(0)) + "\" stroke=\"black\" stroke-dasharray=\"4 2\"/>\n";
  svg += "</svg>\n";
  return svg;
}

}  // namespace seqsew
