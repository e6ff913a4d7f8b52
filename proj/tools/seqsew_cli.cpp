// seqsew command-line front end: run | verify | batch | plot | gen.

#include <seqsew/seqsew.hpp>

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace seqsew;

namespace {

enum Exit { kOk = 0, kFailure = 1, kUsage = 2, kBoundFailed = 3, kIo = 4 };

struct UsageError : Error {
  using Error::Error;
};

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string backend;
  std::string out;
  std::optional<int> samples;
};

RunConfig load_config(const CommonOptions& opt) {
  if (opt.config.empty()) throw UsageError("--config is required");
  RunConfig cfg;
  try {
    cfg = config_from_json(parse_json(read_file(opt.config), opt.config));
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(opt.config + ": " + e.what());
  }
  if (opt.seed) {
    cfg.scenario.seed = *opt.seed;
    cfg.backend.seed = *opt.seed;
  }
  if (!opt.backend.empty()) cfg.backend.kind = backend_from_string(opt.backend);
  if (opt.samples) cfg.backend.n_samples = *opt.samples;
  if (!opt.out.empty()) cfg.out_dir = opt.out;
  cfg.backend.validate();
  return cfg;
}

fs::path prepare_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + dir + "': " + ec.message());
  return fs::path(dir);
}

void write_json(const fs::path& path, const Json& j) { write_file(path.string(), j.dump(2) + "\n"); }

// ---------------------------------------------------------------------------

int cmd_run(const CommonOptions& opt) {
  const RunConfig cfg = load_config(opt);
  const FeatureSequence seq = gen_individual_sequence(cfg.scenario).features();
  const RunOutcome run = run_forecaster(cfg.forecaster, seq, cfg.backend);
  for (const auto& w : tuning_warnings(run.tuning, seq)) std::cerr << "warning: " << w << "\n";
  const fs::path dir = prepare_dir(cfg.out_dir);
  write_file((dir / "run.csv").string(), run_csv(run.protocol.records));
  write_json(dir / "summary.json", run_summary_json(run, seq));
  std::cout << "rounds " << seq.rounds() << ", cumulative loss " << format_number(run.protocol.cumulative_loss)
            << "\n";
  return kOk;
}

int cmd_verify(const CommonOptions& opt, const std::vector<std::string>& bounds) {
  RunConfig cfg = load_config(opt);
  if (!bounds.empty()) cfg.verify.bounds = bounds;
  check_bound_names(cfg.verify.bounds);
  const FeatureSequence seq = gen_individual_sequence(cfg.scenario).features();
  const VerifyOutcome v = verify_configured(cfg.forecaster, seq, cfg.backend, cfg.verify);
  Json arr = Json::array();
  bool all_pass = true;
  for (const auto& r : v.reports) {
    arr.push_back(bound_report_json(r));
    all_pass &= r.pass;
    std::cout << (r.pass ? "PASS " : "FAIL ") << r.bound << " l0=" << l0_norm(r.witness_u)
              << " lhs=" << format_number(r.lhs) << " rhs=" << format_number(r.rhs)
              << " slack=" << format_number(r.slack) << " mc_allowance=" << format_number(r.mc_allowance)
              << (r.ambiguous ? " (ambiguous)" : "") << "\n";
  }
  const fs::path dir = prepare_dir(cfg.out_dir);
  write_json(dir / "bound_reports.json", arr);
  return all_pass ? kOk : kBoundFailed;
}

std::string replications_csv(const BatchExperimentResult& r) {
  std::string out = "# schema: " + std::string(kReplicationCsvSchema) + "\nreplication,risk\n";
  for (std::size_t i = 0; i < r.risks.size(); ++i) out += std::to_string(i) + ',' + format_number(r.risks[i]) + '\n';
  return out;
}

int cmd_batch(const CommonOptions& opt, const std::string& variant_flag) {
  const RunConfig cfg = load_config(opt);
  const std::string variant = variant_flag.empty() ? cfg.batch.variant : variant_flag;
  const fs::path dir = prepare_dir(cfg.out_dir);

  if (variant == "remark15") {
    const ShiftCheck check = remark15_shift_check(cfg.scenario, cfg.backend, cfg.batch.shift, cfg.batch.n_eval);
    Json j;
    j["schema"] = "seqsew.remark15/v1";
    j["shift"] = json_number(check.shift);
    j["n_eval"] = check.n_eval;
    j["residuals_identical"] = check.residuals_identical;
    j["centered_identical"] = check.centered_identical;
    j["max_deviation"] = json_number(check.max_deviation);
    j["risk"] = json_number(check.risk);
    write_json(dir / "remark15.json", j);
    const bool ok = check.residuals_identical && check.centered_identical;
    std::cout << (ok ? "PASS" : "FAIL") << " translation equivariance, shift " << format_number(check.shift)
              << ", max |f_c - f - c| = " << format_number(check.max_deviation) << "\n";
    return ok ? kOk : kBoundFailed;
  }

  BatchExperimentConfig bc;
  bc.variant = risk_variant_from_string(variant);
  bc.replications = cfg.batch.replications;
  bc.n_eval = cfg.batch.n_eval;
  const BatchExperimentResult res = run_batch_experiment(cfg.scenario, cfg.backend, bc);
  Json j = batch_result_json(res);
  bool ok = res.pass;
  std::cout << (res.pass ? "PASS " : "FAIL ") << variant << " risk=" << format_number(res.measured_risk)
            << " rhs=" << format_number(res.rhs) << "\n";

  if (bc.variant == RiskVariant::cor11) {
    const auto rows = family_sweep(cfg.scenario, cfg.backend, bc, default_sweep_families());
    std::string table = "# schema: seqsew.psi_sweep/v1\nfamily,psi_T,max_sq_over_T,max_sq_std_error,risk,rhs,pass\n";
    Json sweep = Json::array();
    for (const auto& r : rows) {
      table += r.family + ',' + format_number(r.psi) + ',' + format_number(r.measured_max_sq) + ',' +
               format_number(r.measured_std_error) + ',' + format_number(r.experiment.measured_risk) + ',' +
               format_number(r.experiment.rhs) + ',' + (r.experiment.pass ? "1" : "0") + '\n';
      sweep.push_back({{"family", r.family},
                       {"psi_T", json_number(r.psi)},
                       {"max_sq_over_T", json_number(r.measured_max_sq)},
                       {"risk", json_number(r.experiment.measured_risk)},
                       {"rhs", json_number(r.experiment.rhs)},
                       {"pass", r.experiment.pass}});
      ok &= r.experiment.pass;
      std::cout << "  " << r.family << " psi_T=" << format_number(r.psi)
                << " E[max eps^2]/T=" << format_number(r.measured_max_sq) << "\n";
    }
    j["family_sweep"] = std::move(sweep);
    write_file((dir / "psi_sweep.csv").string(), table);
  }
  if (!cfg.batch.sigmas.empty()) {
    const auto rows = sigma_sweep(cfg.scenario, cfg.backend, bc, cfg.batch.sigmas);
    std::string table = "# schema: seqsew.sigma_sweep/v1\nsigma,risk,risk_std_error,rhs,pass\n";
    Json sweep = Json::array();
    for (const auto& r : rows) {
      table += format_number(r.sigma) + ',' + format_number(r.experiment.measured_risk) + ',' +
               format_number(r.experiment.risk_std_error) + ',' + format_number(r.experiment.rhs) + ',' +
               (r.experiment.pass ? "1" : "0") + '\n';
      sweep.push_back({{"sigma", json_number(r.sigma)},
                       {"risk", json_number(r.experiment.measured_risk)},
                       {"rhs", json_number(r.experiment.rhs)},
                       {"pass", r.experiment.pass}});
      ok &= r.experiment.pass;
      std::cout << "  sigma=" << format_number(r.sigma) << " risk=" << format_number(r.experiment.measured_risk)
                << " rhs=" << format_number(r.experiment.rhs) << "\n";
    }
    j["sigma_sweep"] = std::move(sweep);
    write_file((dir / "sigma_sweep.csv").string(), table);
  }
  write_json(dir / "batch.json", j);
  write_file((dir / "replications.csv").string(), replications_csv(res));
  return ok ? kOk : kBoundFailed;
}

int cmd_gen(const CommonOptions& opt) {
  const RunConfig cfg = load_config(opt);
  const Dataset data = gen_individual_sequence(cfg.scenario);
  const fs::path dir = prepare_dir(cfg.out_dir);
  write_file((dir / "data.csv").string(), data_csv(data));
  std::cout << "wrote " << data.rounds() << " rounds\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// plot

std::vector<double> column(const CsvTable& t, const std::string& name, const std::string& origin) {
  const int c = t.column(name);
  if (c < 0) throw IoError(origin + ": missing column '" + name + "'");
  std::vector<double> out;
  out.reserve(t.rows.size());
  for (const auto& row : t.rows) out.push_back(row[static_cast<std::size_t>(c)]);
  return out;
}

bool looks_like_json(const std::string& text) {
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) continue;
    return c == '{' || c == '[';
  }
  return false;
}

std::string infer_kind(const std::string& text) {
  if (!looks_like_json(text)) return "cumloss";
  const Json j = Json::parse(text, nullptr, false);
  if (j.is_array()) return "margins";
  if (j.is_object() && j.value("schema", std::string()) == kBatchSchema) return "risk";
  throw UsageError("cannot infer the plot kind; pass --kind");
}

int cmd_plot(const std::string& out, const std::vector<std::string>& inputs, std::string kind) {
  if (inputs.empty()) throw UsageError("plot: no input files given");
  std::vector<std::pair<std::string, std::string>> texts;
  for (const auto& path : inputs) {
    std::string text = read_file(path);
    if (text.find_first_not_of(" \t\r\n") == std::string::npos) throw UsageError("plot: input '" + path + "' is empty");
    texts.emplace_back(path, std::move(text));
  }
  if (kind.empty() || kind == "auto") kind = infer_kind(texts.front().second);

  std::string svg;
  if (kind == "cumloss" || kind == "staircase") {
    std::vector<Series> series;
    for (const auto& [path, text] : texts) {
      const CsvTable t = parse_csv(text, path);
      Series s;
      s.label = fs::path(path).parent_path().filename().string() + "/" + fs::path(path).filename().string();
      s.x = column(t, "t", path);
      s.y = column(t, kind == "cumloss" ? "cumloss" : "B_t", path);
      s.steps = kind == "staircase";
      series.push_back(std::move(s));
    }
    svg = kind == "cumloss" ? svg_line_chart("Cumulative square loss", "round t", "cumulative loss", series)
                            : svg_line_chart("Clipping threshold B_t", "round t", "B_t", series);
  } else if (kind == "margins") {
    std::vector<Bar> bars;
    for (const auto& [path, text] : texts) {
      const Json arr = parse_json(text, path);
      if (!arr.is_array()) throw IoError(path + ": expected an array of bound reports");
      for (const auto& r : arr) {
        const Vector u = vector_from_json(r.at("witness_u"), path + ": witness_u");
        bars.push_back({r.at("bound").get<std::string>() + " s=" + std::to_string(l0_norm(u)),
                        json_to_double(r.at("slack"), path + ": slack")});
      }
    }
    svg = svg_bar_chart("Bound margins (rhs - lhs)", "slack", bars);
  } else if (kind == "risk") {
    std::vector<std::pair<double, std::pair<double, double>>> pts;
    for (const auto& [path, text] : texts) {
      const Json j = parse_json(text, path);
      if (!j.is_object() || !j.contains("T")) throw IoError(path + ": expected a batch result object");
      pts.push_back({j.at("T").get<double>(),
                     {json_to_double(j.at("measured_risk"), path), json_to_double(j.at("rhs"), path)}});
    }
    std::sort(pts.begin(), pts.end());
    Series risk{"measured risk", {}, {}}, rhs{"bound", {}, {}};
    for (const auto& p : pts) {
      risk.x.push_back(p.first);
      risk.y.push_back(p.second.first);
      rhs.x.push_back(p.first);
      rhs.y.push_back(p.second.second);
    }
    svg = svg_line_chart("Risk versus sample size", "T", "L2 risk", {risk, rhs});
  } else {
    throw UsageError("plot: unknown kind '" + kind + "' (expected cumloss, staircase, margins or risk)");
  }
  const fs::path dir = prepare_dir(out.empty() ? "out" : out);
  write_file((dir / ("plot_" + kind + ".svg")).string(), svg);
  return kOk;
}

void add_common(CLI::App* sub, CommonOptions& opt, bool with_config) {
  if (with_config) {
    sub->add_option("--config", opt.config, "JSON run configuration")->required();
    sub->add_option("--seed", opt.seed, "Seed for data and backend (overrides the config)");
    sub->add_option("--backend", opt.backend, "Posterior backend")
        ->check(CLI::IsMember({"importance", "chain", "quadrature"}));
    sub->add_option("--samples", opt.samples, "Number of posterior samples")->check(CLI::PositiveNumber);
  }
  sub->add_option("--out", opt.out, "Output directory");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse exponentially weighted online regression"};
  app.require_subcommand(1);
  CommonOptions opt;
  std::vector<std::string> bounds, inputs;
  std::string variant, kind;

  auto* run = app.add_subcommand("run", "Run a forecaster; write per-round CSV and a JSON summary");
  add_common(run, opt, true);
  auto* verify = app.add_subcommand("verify", "Check regret bounds on a run");
  add_common(verify, opt, true);
  verify->add_option("--bounds", bounds, "Bounds to check (overrides the config)")->delimiter(',');
  auto* batch = app.add_subcommand("batch", "Replicated batch-risk experiment");
  add_common(batch, opt, true);
  batch->add_option("--variant", variant, "thm10, cor11, cor12, thm13, cor14 or remark15");
  auto* plot = app.add_subcommand("plot", "Render SVG charts from run, report or batch files");
  add_common(plot, opt, false);
  plot->add_option("--input", inputs, "Input files")->delimiter(',');
  plot->add_option("--kind", kind, "cumloss, staircase, margins, risk or auto");
  auto* gen = app.add_subcommand("gen", "Generate a scenario and dump it as CSV");
  add_common(gen, opt, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*run) return cmd_run(opt);
    if (*verify) return cmd_verify(opt, bounds);
    if (*batch) return cmd_batch(opt, variant);
    if (*plot) return cmd_plot(opt.out, inputs, kind);
    if (*gen) return cmd_gen(opt);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kIo;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kIo;
  } catch (const ArgumentError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const ContractError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const UnsupportedDimension& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kUsage;
}
