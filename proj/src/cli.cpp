#include "stvnn/cli.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "stvnn/checkpoint.hpp"
#include "stvnn/config.hpp"
#include "stvnn/datagen.hpp"
#include "stvnn/experiments.hpp"
#include "stvnn/metrics.hpp"
#include "stvnn/series_io.hpp"
#include "stvnn/training.hpp"

namespace stvnn {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

class OutputConflict : public Error {
 public:
  using Error::Error;
};

void claim_outputs(const std::vector<std::string>& paths, bool force) {
  for (const auto& p : paths)
    if (!force && fs::exists(p)) throw OutputConflict("output exists (use --force to overwrite): " + p);
}

void write_text(const std::string& path, const std::string& text) {
  const fs::path parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw InputError("cannot open for writing: " + path);
  f << text;
  if (!f) throw InputError("write failed: " + path);
}

std::string sibling(const std::string& path, const std::string& suffix) {
  fs::path p(path);
  return (p.parent_path() / (p.stem().string() + suffix)).string();
}

std::string hex(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << v;
  return s.str();
}

// ---------------------------------------------------------------- gen

struct GenArgs {
  std::string kind;
  int n = 20;
  int samples = 0;
  double tail = 0.5;
  int tau = 9;
  std::uint64_t seed = 0;
  std::string out;
  bool force = false;
  int train_length = 4000;
  double train_alpha = 0.5;
  int segment_length = 1000;
  std::vector<double> alphas;
};

int cmd_gen(const GenArgs& a, std::ostream& out) {
  const std::string meta_path = sibling(a.out, ".meta.json");
  claim_outputs({a.out, meta_path}, a.force);
  if (a.n < 1) throw PreconditionError("--n must be >= 1");
  json meta;
  meta["kind"] = a.kind;
  meta["n"] = a.n;
  meta["seed"] = a.seed;
  Series values;
  if (a.kind == "stationary") {
    if (a.samples < 1) throw PreconditionError("--samples must be >= 1");
    values = synthetic_stationary(a.n, a.samples, a.tail, a.tau, a.seed);
    meta["samples"] = a.samples;
    meta["tail"] = a.tail;
    meta["tau"] = a.tau;
    meta["effective_rank"] = TailProfile{a.n, a.tail, 0, 0}.rank();
  } else {
    ShiftSchedule schedule = ShiftSchedule::standard();
    schedule.train_length = a.train_length;
    schedule.train_alpha = a.train_alpha;
    if (!a.alphas.empty()) {
      schedule.segments.clear();
      for (double al : a.alphas) schedule.segments.push_back({a.segment_length, al});
    } else {
      for (auto& s : schedule.segments) s.length = a.segment_length;
    }
    const ShiftData d = gen_nonstationary(schedule, a.n, a.seed);
    values.resize(d.train.rows() + d.test.rows(), a.n);
    values << d.train, d.test;
    meta["train_length"] = schedule.train_length;
    meta["train_alpha"] = schedule.train_alpha;
    json segs = json::array();
    for (const auto& s : schedule.segments) segs.push_back({{"length", s.length}, {"alpha", s.alpha}});
    meta["segments"] = segs;
    meta["change_points_test"] = d.change_points;
    std::vector<int> absolute;
    for (int c : d.change_points) absolute.push_back(schedule.train_length + c);
    meta["change_points"] = absolute;
  }
  const SeriesFile file = make_series_file(values);
  meta["fingerprint"] = hex(series_fingerprint(file));
  write_series_csv(a.out, file);
  write_text(meta_path, meta.dump(2) + "\n");
  out << "wrote " << a.out << " (" << values.rows() << " x " << values.cols() << ")\n";
  return kExitOk;
}

// ---------------------------------------------------------------- run

struct RunArgs {
  std::string experiment;
  std::string config_path;
  std::string data;
  std::string horizons;
  std::optional<int> trials;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool force = false;
};

Config assemble_config(const RunArgs& a) {
  Config c = a.config_path.empty() ? Config{} : Config::load(a.config_path);
  if (!a.horizons.empty()) {
    parse_int_list(a.horizons);  // validates
    c.set("model.horizons", a.horizons);
  }
  if (a.trials) c.set("experiment.trials", std::to_string(*a.trials));
  if (a.seed) c.set("experiment.seed", std::to_string(*a.seed));
  std::vector<std::string> unknown = c.unknown_keys(known_config_keys());
  std::erase_if(unknown, [](const std::string& k) { return k.rfind("grid.", 0) == 0; });
  if (!unknown.empty()) throw ConfigError("config: unknown key '" + unknown.front() + "'");
  return c;
}

struct Dataset {
  Series values;
  std::string name;
  std::string fingerprint;
  std::string source;
};

Dataset load_dataset(const RunArgs& a, const Config& c) {
  Dataset d;
  const std::string path = !a.data.empty() ? a.data : c.get_string("data.path", "");
  if (!path.empty()) {
    const SeriesFile f = read_series_csv(path);
    d.values = f.values;
    d.name = fs::path(path).stem().string();
    d.fingerprint = hex(series_fingerprint(f));
    d.source = path;
    return d;
  }
  const int n = c.get_int("data.n", 20);
  const int samples = c.get_int("data.samples", 10000);
  const double tail = c.get_double("data.tail", 0.5);
  const int tau = c.get_int("data.tau", 9);
  const std::uint64_t seed = c.get_u64("data.seed", c.get_u64("experiment.seed", 0));
  if (n < 1 || samples < 2 || tau < 0) throw ConfigError("config: invalid data.* settings");
  d.values = synthetic_stationary(n, samples, tail, tau, seed);
  d.name = "synthetic_stationary";
  d.fingerprint = hex(series_fingerprint(make_series_file(d.values)));
  d.source = "generated";
  return d;
}

std::map<std::string, std::vector<std::string>> grid_from(const Config& c) {
  std::map<std::string, std::vector<std::string>> grids;
  for (const auto& [k, v] : c.values()) {
    if (k.rfind("grid.", 0) != 0) continue;
    std::vector<std::string> values;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, '|')) {
      const auto b = item.find_first_not_of(' '), e = item.find_last_not_of(' ');
      if (b == std::string::npos) throw ConfigError("config: empty value in " + k);
      values.push_back(item.substr(b, e - b + 1));
    }
    grids[k.substr(5)] = values;
  }
  if (grids.empty()) throw ConfigError("config: grid search needs at least one grid.<key> = a|b|... entry");
  for (const auto& [k, v] : grids) {
    (void)v;
    const auto known = known_config_keys();
    if (std::find(known.begin(), known.end(), k) == known.end()) throw ConfigError("config: cannot grid over '" + k + "'");
  }
  return grids;
}

int cmd_run(const RunArgs& a, std::ostream& out) {
  static const std::vector<std::string> kinds{"stability", "shift", "ablation", "forecast", "grid"};
  if (std::find(kinds.begin(), kinds.end(), a.experiment) == kinds.end())
    throw PreconditionError("unknown experiment '" + a.experiment + "'");
  const Config c = assemble_config(a);
  const std::string manifest_path = sibling(a.out, ".manifest.json");
  std::vector<std::string> outputs{a.out, manifest_path};
  if (a.experiment == "stability") outputs.push_back(sibling(a.out, ".curves.csv"));
  claim_outputs(outputs, a.force);

  const auto start = std::chrono::steady_clock::now();
  json manifest;
  manifest["tool"] = "stvnn";
  manifest["version"] = kVersion;
  manifest["experiment"] = a.experiment;
  manifest["config"] = c.canonical();
  manifest["config_hash"] = hex(c.hash());
  const std::uint64_t seed = c.get_u64("experiment.seed", 0);
  manifest["seed"] = seed;

  ResultTable table;
  std::string curves;
  int trials = 0;
  if (a.experiment == "stability") {
    const StabilityConfig sc = stability_config_from(c);
    trials = sc.trials;
    const StabilityOutput r = run_stability(sc);
    table = r.table;
    curves = r.curves_csv();
    manifest["dataset"] = {{"source", "generated"}, {"kind", "stationary"}, {"n", sc.n}};
  } else if (a.experiment == "shift" || a.experiment == "ablation") {
    const ShiftConfig sc = shift_config_from(c);
    trials = sc.trials;
    const ShiftOutput r = a.experiment == "shift" ? run_shift(sc) : run_ablation(sc);
    table = r.table;
    manifest["dataset"] = {{"source", "generated"}, {"kind", "shift"}, {"n", sc.n}};
    manifest["change_points"] = r.change_points;
  } else {
    const Dataset d = load_dataset(a, c);
    manifest["dataset"] = {{"source", d.source}, {"name", d.name}, {"rows", d.values.rows()},
                           {"columns", d.values.cols()}, {"fingerprint", d.fingerprint}};
    if (a.experiment == "forecast") {
      const ForecastConfig fc = forecast_config_from(c);
      trials = fc.trials;
      table = run_forecast(d.values, fc, d.name).table;
    } else {
      forecast_config_from(c);  // validates shared keys
      const GridOutput g = grid_search(d.values, c, grid_from(c), d.name);
      table = g.table;
      json best;
      for (const auto& [k, v] : g.points[g.best].assignment) best[k] = v;
      manifest["selected"] = best;
    }
  }
  std::vector<std::string> trial_seeds;
  for (int t = 0; t < trials; ++t) trial_seeds.push_back(hex(derive_seed(seed, t)));
  manifest["trial_seeds"] = trial_seeds;

  write_text(a.out, table.to_csv());
  if (!curves.empty()) write_text(outputs[2], curves);
  manifest["wall_clock_seconds"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  manifest["outputs"] = outputs;
  write_text(manifest_path, manifest.dump(2) + "\n");
  out << "wrote " << a.out << " (" << table.rows.size() << " rows)\n";
  return kExitOk;
}

// ---------------------------------------------------------------- checkpoint

struct CheckpointArgs {
  std::string action;
  std::string config_path;
  std::string data;
  std::string in;
  std::string out;
  std::string predictions;
  int from = -1;
  int steps = -1;
  bool force = false;
};

int cmd_checkpoint(const CheckpointArgs& a, std::ostream& out) {
  if (a.action == "create") {
    if (a.data.empty() || a.out.empty()) throw CLI::RequiredError("create needs --data and --out");
    claim_outputs({a.out}, a.force);
    Config c = a.config_path.empty() ? Config{} : Config::load(a.config_path);
    const ForecastConfig fc = forecast_config_from(c);
    const SeriesFile f = read_series_csv(a.data);
    const int rows = static_cast<int>(f.values.rows());
    const SplitSizes sp = chronological_split(rows, fc.split);
    if (sp.train < 2 || sp.val < 1) throw InputError("dataset too short for the requested split");
    const Standardizer st = Standardizer::fit(f.values.topRows(sp.train));
    const Series z = st.apply(f.values);
    const CovarianceState cov0 = init_from_batch(z.topRows(sp.train), Nonstationary{fc.model.gamma});
    Architecture arch;
    arch.order = fc.model.order;
    arch.memory = fc.model.memory;
    arch.widths = fc.model.widths;
    arch.readout_mode = fc.model.readout;
    arch.nodes = static_cast<int>(f.values.cols());
    std::mt19937_64 rng(derive_seed(fc.seed, 1));
    const NetworkParams init = init_network(arch, rng);
    const int tau = fc.horizons.front();
    const ForecastTask task = make_task(z, tau, 1);
    const PositionRange tr = origins_for_rows(0, sp.train, tau, init.receptive_field());
    const PositionRange va = origins_for_rows(sp.train, sp.train + sp.val, tau, init.receptive_field());
    if (tr.size() == 0 || va.size() == 0) throw InputError("dataset too short for the model window");
    TrainConfig tc;
    tc.epochs = fc.model.epochs;
    tc.batch = fc.model.batch;
    tc.lr = fc.model.lr;
    tc.optimizer = fc.model.optimizer;
    tc.seed = derive_seed(fc.seed, 2);
    const TrainReport rep = train_offline(init, trace_normalize(cov0.cov), task, tr, va, tc);
    OnlineOptions opts;
    opts.eta = fc.model.online_rate();
    opts.horizon = tau;
    NetworkForecaster model(rep.params, cov0, opts);
    for (int r = 0; r < sp.train; ++r) model.prime(z.row(r).transpose());
    for (int r = sp.train; r < sp.train + sp.val; ++r) model.step(z.row(r).transpose());
    save_checkpoint(a.out, snapshot(model, st, c.canonical()));
    out << "wrote " << a.out << " after " << model.steps() << " online steps (next row " << sp.train + sp.val
        << ")\n";
    return kExitOk;
  }
  if (a.in.empty()) throw CLI::RequiredError("--in");
  if (a.action == "verify") {
    const ModelCheckpoint ck = load_checkpoint(a.in);
    out << "ok: " << ck.params.parameter_count() << " parameters, " << ck.covariance.dim() << " nodes, "
        << ck.steps << " steps, config hash " << hex(fnv1a(ck.config_text)) << "\n";
    return kExitOk;
  }
  if (a.action == "roundtrip") {
    const std::vector<std::uint8_t> bytes = read_file_bytes(a.in);
    const std::vector<std::uint8_t> again = encode_checkpoint(decode_checkpoint(bytes));
    if (again != bytes) throw CorruptionError("re-encoded checkpoint differs from the file");
    out << "identical (" << bytes.size() << " bytes)\n";
    return kExitOk;
  }
  if (a.action == "stream") {
    if (a.data.empty() || a.out.empty()) throw CLI::RequiredError("stream needs --data and --out");
    std::vector<std::string> outputs{a.out};
    if (!a.predictions.empty()) outputs.push_back(a.predictions);
    claim_outputs(outputs, a.force);
    const ModelCheckpoint ck = load_checkpoint(a.in);
    NetworkForecaster model = restore_forecaster(ck);
    const SeriesFile f = read_series_csv(a.data);
    if (f.values.cols() != ck.covariance.dim()) throw InputError("data width does not match the checkpoint");
    const Series z = ck.standardizer.apply(f.values);
    const int rows = static_cast<int>(z.rows());
    const int begin = a.from >= 0 ? a.from : 0;
    const int end = a.steps >= 0 ? std::min(rows, begin + a.steps) : rows;
    if (begin > rows) throw InputError("--from is past the end of the data");
    std::string preds = "row";
    for (const auto& name : f.names) preds += "," + name;
    preds += "\n";
    for (int r = begin; r < end; ++r) {
      auto rec = model.step(z.row(r).transpose());
      if (!rec) continue;
      const Vector p = ck.standardizer.invert(Vector(rec->prediction.col(0)));
      preds += std::to_string(r);
      for (Eigen::Index i = 0; i < p.size(); ++i) preds += "," + format_double(p(i));
      preds += "\n";
    }
    save_checkpoint(a.out, snapshot(model, ck.standardizer, ck.config_text));
    if (!a.predictions.empty()) write_text(a.predictions, preds);
    out << "streamed rows " << begin << ".." << end << ", wrote " << a.out << "\n";
    return kExitOk;
  }
  throw PreconditionError("unknown checkpoint action '" + a.action + "'");
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Streaming covariance neural networks: data generation, experiments, checkpoints", "stvnn"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  GenArgs g;
  auto* gen = app.add_subcommand("gen", "Generate a synthetic series CSV");
  gen->add_option("--kind", g.kind, "stationary | shift")->required()->check(CLI::IsMember({"stationary", "shift"}));
  gen->add_option("--n", g.n, "number of variables");
  gen->add_option("--samples", g.samples, "stream length (stationary)");
  gen->add_option("--tail", g.tail, "tail strength in [0, 1] (stationary)")->check(CLI::Range(0.0, 1.0));
  gen->add_option("--tau", g.tau, "moving-average order (stationary)");
  gen->add_option("--seed", g.seed, "random seed");
  gen->add_option("--train-length", g.train_length, "training block length (shift)");
  gen->add_option("--train-alpha", g.train_alpha, "training AR coefficient (shift)");
  gen->add_option("--segment-length", g.segment_length, "test segment length (shift)");
  gen->add_option("--alphas", g.alphas, "test segment AR coefficients (shift)")->delimiter(',');
  gen->add_option("--out", g.out, "output CSV path")->required();
  gen->add_flag("--force", g.force, "overwrite existing outputs");

  RunArgs r;
  auto* run = app.add_subcommand("run", "Run an experiment and write a long-format results CSV");
  run->add_option("experiment", r.experiment, "stability | shift | ablation | forecast | grid")
      ->required()
      ->check(CLI::IsMember({"stability", "shift", "ablation", "forecast", "grid"}));
  run->add_option("--config", r.config_path, "key = value config file")->check(CLI::ExistingFile);
  run->add_option("--data", r.data, "series CSV (forecast, grid)");
  run->add_option("--horizons", r.horizons, "comma-separated forecast horizons");
  run->add_option("--trials", r.trials, "number of trials");
  run->add_option("--seed", r.seed, "base seed");
  run->add_option("--out", r.out, "results CSV path")->required();
  run->add_flag("--force", r.force, "overwrite existing outputs");

  CheckpointArgs k;
  auto* ckpt = app.add_subcommand("checkpoint", "Create, stream, verify or round-trip a model checkpoint");
  ckpt->add_option("action", k.action, "create | stream | verify | roundtrip")
      ->required()
      ->check(CLI::IsMember({"create", "stream", "verify", "roundtrip"}));
  ckpt->add_option("--config", k.config_path, "config file (create)")->check(CLI::ExistingFile);
  ckpt->add_option("--data", k.data, "series CSV (create, stream)");
  ckpt->add_option("--in", k.in, "checkpoint to read");
  ckpt->add_option("--out", k.out, "checkpoint to write");
  ckpt->add_option("--predictions", k.predictions, "CSV of streamed forecasts (stream)");
  ckpt->add_option("--from", k.from, "first data row to stream");
  ckpt->add_option("--steps", k.steps, "number of rows to stream");
  ckpt->add_flag("--force", k.force, "overwrite existing outputs");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen) {
      if (g.kind == "stationary" && g.samples == 0) throw CLI::RequiredError("--samples");
      return cmd_gen(g, out);
    }
    if (*run) return cmd_run(r, out);
    return cmd_checkpoint(k, out);
  } catch (const CLI::Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const PreconditionError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const OutputConflict& e) {
    err << "error: " << e.what() << "\n";
    return kExitOutputConflict;
  } catch (const CorruptionError& e) {
    err << "error: " << e.what() << "\n";
    return kExitCorrupt;
  } catch (const InputError& e) {
    err << "error: " << e.what() << "\n";
    return kExitCorrupt;
  } catch (const NumericalError& e) {
    err << "error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const DegenerateCovarianceError& e) {
    err << "error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitInternal;
  }
}

}  // namespace stvnn
