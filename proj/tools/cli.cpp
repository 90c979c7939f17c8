#include "cli.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "gmml/data.hpp"
#include "gmml/encoder.hpp"
#include "gmml/episodes.hpp"
#include "gmml/error.hpp"
#include "gmml/verify.hpp"
#include "json.hpp"

namespace gmml::cli {

namespace {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string timestamp_utc() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

std::string real(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

std::uint64_t resolve_seed(const std::string& flag) {
  std::string text = flag;
  if (text.empty()) {
    const char* env = std::getenv("GMML_SEED");
    if (env == nullptr || *env == '\0') return 0;
    text = env;
  }
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw UsageError("seed must be a nonnegative integer, got '" + text + "'");
  }
}

template <typename T>
std::vector<T> parse_list(const std::string& text, const char* what) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::istringstream is(item);
    T v{};
    if (!(is >> v) || !is.eof()) throw UsageError(std::string("cannot parse ") + what + " entry '" + item + "'");
    out.push_back(v);
  }
  return out;
}

Precision parse_precision(int bits) {
  if (bits == 64) return Precision::f64;
  if (bits == 32) return Precision::f32;
  throw UsageError("--precision must be 32 or 64");
}

std::string manifest_path(const std::string& flag, const std::string& primary) {
  return flag.empty() ? primary + ".manifest.json" : flag;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::io_failure, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::io_failure, "short write to " + path.string());
}

void write_manifest(const std::string& path, const std::string& subcommand, const Json& config,
                    std::uint64_t seed, const Json& artifacts, const Json& extra = Json::object()) {
  Json m = {{"subcommand", subcommand}, {"config", config},          {"seed", seed},
            {"artifacts", artifacts},   {"tool_version", kToolVersion}, {"timestamp", timestamp_utc()}};
  for (auto it = extra.begin(); it != extra.end(); ++it) m[it.key()] = it.value();
  write_text(path, m.dump(2) + "\n");
}

// Validation failures of resolved flag values are usage errors.
template <typename F>
void as_usage(F&& validate) {
  try {
    validate();
  } catch (const Error& e) {
    if (e.code() != ErrorCode::invalid_argument) throw;
    throw UsageError(e.what());
  }
}

// ---------------------------------------------------------------- gen-data

struct GenDataFlags {
  std::string preset;
  std::size_t classes = 100;
  std::size_t modes = 3;
  std::size_t dim = 16;
  double mode_separation = 4.0;
  double class_separation = 8.0;
  double noise = 1.0;
  std::size_t samples_per_class = 120;
  std::string fractions = "0.64,0.16,0.20";
  std::string seed;
  int precision = 64;
  std::string output;
  std::string manifest;
};

void add_gen_data(CLI::App& app, GenDataFlags& f) {
  auto* sub = app.add_subcommand("gen-data", "Generate a synthetic multi-modal Gaussian dataset");
  sub->add_option("--preset", f.preset, "Named generator settings (tri-modal-100)");
  sub->add_option("--classes", f.classes, "Number of classes");
  sub->add_option("--modes", f.modes, "Gaussian modes per class");
  sub->add_option("--dim", f.dim, "Feature dimension");
  sub->add_option("--mode-separation", f.mode_separation, "Scale of mode offsets within a class");
  sub->add_option("--class-separation", f.class_separation, "Scale of class centers");
  sub->add_option("--noise", f.noise, "Isotropic noise sigma");
  sub->add_option("--samples-per-class", f.samples_per_class, "Samples drawn per class");
  sub->add_option("--split-fractions", f.fractions, "train,val,test class fractions");
  sub->add_option("--seed", f.seed, "Seed (falls back to GMML_SEED)");
  sub->add_option("--precision", f.precision, "Payload precision in bits (32 or 64)");
  sub->add_option("-o,--output", f.output, "Output GMDS file")->required();
  sub->add_option("--manifest", f.manifest, "Manifest path (default <output>.manifest.json)");
}

int cmd_gen_data(const CLI::App& sub, GenDataFlags& f, std::ostream& out) {
  SyntheticSpec spec;
  if (!f.preset.empty()) {
    const auto preset = synthetic_preset(f.preset);
    if (!preset) throw UsageError("unknown preset '" + f.preset + "' (known: tri-modal-100)");
    spec = *preset;
  }
  const auto given = [&](const char* name) { return sub.get_option(name)->count() > 0; };
  if (f.preset.empty() || given("--classes")) spec.classes = f.classes;
  if (f.preset.empty() || given("--modes")) spec.modes_per_class = f.modes;
  if (f.preset.empty() || given("--dim")) spec.dim = f.dim;
  if (f.preset.empty() || given("--mode-separation")) spec.mode_separation = f.mode_separation;
  if (f.preset.empty() || given("--class-separation")) spec.class_separation = f.class_separation;
  if (f.preset.empty() || given("--noise")) spec.noise_sigma = f.noise;
  if (f.preset.empty() || given("--samples-per-class")) spec.samples_per_class = f.samples_per_class;
  if (f.preset.empty() || given("--split-fractions")) {
    const auto fr = parse_list<double>(f.fractions, "--split-fractions");
    if (fr.size() != 3) throw UsageError("--split-fractions needs three values");
    spec.fractions = {fr[0], fr[1], fr[2]};
  }
  spec.seed = resolve_seed(f.seed);
  const PayloadPrecision precision = parse_precision(f.precision) == Precision::f32 ? PayloadPrecision::f32
                                                                                    : PayloadPrecision::f64;
  as_usage([&] { spec.validate(); });

  const Dataset ds = generate_synthetic(spec);
  save_dataset(ds, f.output, precision);

  const Json config = {{"classes", spec.classes},
                       {"modes", spec.modes_per_class},
                       {"dim", spec.dim},
                       {"mode-separation", real(spec.mode_separation)},
                       {"class-separation", real(spec.class_separation)},
                       {"noise", real(spec.noise_sigma)},
                       {"samples-per-class", spec.samples_per_class},
                       {"split-fractions", real(spec.fractions.train) + "," + real(spec.fractions.val) + "," +
                                               real(spec.fractions.test)},
                       {"seed", std::to_string(spec.seed)},
                       {"precision", f.precision},
                       {"output", f.output},
                       {"manifest", manifest_path(f.manifest, f.output)}};
  write_manifest(manifest_path(f.manifest, f.output), "gen-data", config, spec.seed,
                 {{"dataset", f.output}}, {{"preset", f.preset}});
  out << "wrote " << f.output << ": " << ds.size() << " samples, D=" << ds.dim << ", classes train/val/test = "
      << ds.classes_in(Split::train).size() << "/" << ds.classes_in(Split::val).size() << "/"
      << ds.classes_in(Split::test).size() << "\n";
  return kSuccess;
}

// ---------------------------------------------------------------- training flags

struct TrainFlags {
  std::string data;
  std::string loss = "gm";
  double p = 1.0;
  std::size_t epochs = 40;
  std::size_t batch_size = 128;
  std::optional<std::size_t> warmup_epochs;
  double lr = 0.1;
  std::optional<std::size_t> decay_epoch;
  double decay_factor = 10.0;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::string seed;
  int precision = 64;
  std::string hidden = "64,64";
  std::size_t head = 32;
  std::size_t samples_per_class = 4;
  double asl_gamma_pos = 0.0;
  double asl_gamma_neg = 4.0;
  double asl_clip = 0.05;
  unsigned threads = 1;
};

const std::vector<std::string> kLossNames = {"pn", "nca", "gm", "bce", "asl"};

void add_train_flags(CLI::App* sub, TrainFlags& f, bool with_loss) {
  sub->add_option("--data", f.data, "Dataset file (GMDS or CSV)")->required();
  if (with_loss) {
    sub->add_option("--loss", f.loss, "Loss: pn, nca, gm, bce, asl")->check(CLI::IsMember(kLossNames));
  }
  sub->add_option("--p", f.p, "Distance exponent for the loss");
  sub->add_option("--epochs", f.epochs, "Training epochs");
  sub->add_option("--batch-size", f.batch_size, "Mini-batch size");
  sub->add_option("--warmup-epochs", f.warmup_epochs, "Linear warmup epochs (default min(10, epochs))");
  sub->add_option("--lr", f.lr, "Base learning rate");
  sub->add_option("--decay-epoch", f.decay_epoch, "Epoch of the step decay (default 0.7 * epochs)");
  sub->add_option("--decay-factor", f.decay_factor, "Step decay divisor");
  sub->add_option("--momentum", f.momentum, "Nesterov momentum");
  sub->add_option("--weight-decay", f.weight_decay, "L2 weight decay");
  sub->add_option("--seed", f.seed, "Seed (falls back to GMML_SEED)");
  sub->add_option("--precision", f.precision, "Encoder arithmetic precision in bits (32 or 64)");
  sub->add_option("--hidden", f.hidden, "Hidden layer widths, comma separated");
  sub->add_option("--head", f.head, "Projection head width (0 disables the head)");
  sub->add_option("--samples-per-class", f.samples_per_class, "Samples per class group when packing batches");
  sub->add_option("--asl-gamma-pos", f.asl_gamma_pos, "ASL positive focusing exponent");
  sub->add_option("--asl-gamma-neg", f.asl_gamma_neg, "ASL negative focusing exponent");
  sub->add_option("--asl-clip", f.asl_clip, "ASL probability clip");
  sub->add_option("--threads", f.threads, "Worker threads for the batch loss");
}

struct ResolvedTraining {
  TrainConfig config;
  MlpShape shape;
};

ResolvedTraining resolve_training(const TrainFlags& f, std::size_t input_dim) {
  ResolvedTraining r;
  TrainConfig& c = r.config;
  c.loss = parse_loss_kind(f.loss).value();
  c.p = f.p;
  c.epochs = f.epochs;
  c.batch_size = f.batch_size;
  c.warmup_epochs = f.warmup_epochs.value_or(std::min<std::size_t>(10, f.epochs));
  c.base_lr = f.lr;
  c.decay_epoch = f.decay_epoch.value_or(
      static_cast<std::size_t>(std::llround(0.7 * static_cast<double>(f.epochs))));
  c.decay_factor = f.decay_factor;
  c.momentum = f.momentum;
  c.weight_decay = f.weight_decay;
  c.seed = resolve_seed(f.seed);
  c.precision = parse_precision(f.precision);
  c.samples_per_class = f.samples_per_class;
  c.asl = {f.asl_gamma_pos, f.asl_gamma_neg, f.asl_clip};
  c.threads = std::max(1u, f.threads);
  r.shape.input_dim = input_dim;
  r.shape.hidden = parse_list<std::size_t>(f.hidden, "--hidden");
  r.shape.head_dim = f.head;
  as_usage([&] { c.validate(); });
  if (r.shape.head_dim > 0 && r.shape.hidden.empty()) throw UsageError("a projection head needs --hidden layers");
  return r;
}

Json training_config_json(const ResolvedTraining& r, const TrainFlags& f, bool with_loss) {
  const TrainConfig& c = r.config;
  std::string hidden;
  for (std::size_t i = 0; i < r.shape.hidden.size(); ++i) hidden += (i ? "," : "") + std::to_string(r.shape.hidden[i]);
  Json j = {{"data", f.data}};
  if (with_loss) j["loss"] = std::string(to_string(c.loss));
  j.update(Json{{"p", real(c.p)},
                {"epochs", c.epochs},
                {"batch-size", c.batch_size},
                {"warmup-epochs", c.warmup_epochs},
                {"lr", real(c.base_lr)},
                {"decay-epoch", c.decay_epoch},
                {"decay-factor", real(c.decay_factor)},
                {"momentum", real(c.momentum)},
                {"weight-decay", real(c.weight_decay)},
                {"seed", std::to_string(c.seed)},
                {"precision", f.precision},
                {"hidden", hidden},
                {"head", r.shape.head_dim},
                {"samples-per-class", c.samples_per_class},
                {"asl-gamma-pos", real(c.asl.gamma_pos)},
                {"asl-gamma-neg", real(c.asl.gamma_neg)},
                {"asl-clip", real(c.asl.clip)},
                {"threads", c.threads}});
  return j;
}

MlpParams initial_encoder(const ResolvedTraining& r) {
  Rng rng(r.config.seed, "init");
  return init_mlp(r.shape, rng);
}

std::string history_csv(const TrainHistory& history) {
  std::ostringstream os;
  os << "epoch,mean_loss,lr\n";
  for (const auto& e : history.epochs) os << e.epoch << ',' << real(e.mean_loss) << ',' << real(e.lr) << '\n';
  return os.str();
}

// ---------------------------------------------------------------- train

struct TrainCmdFlags {
  TrainFlags train;
  std::string output;
  std::string history;
  std::string manifest;
};

void add_train(CLI::App& app, TrainCmdFlags& f) {
  auto* sub = app.add_subcommand("train", "Train the encoder on the training split");
  add_train_flags(sub, f.train, true);
  sub->add_option("-o,--output", f.output, "Output GMML checkpoint")->required();
  sub->add_option("--history", f.history, "Per-epoch history CSV (default <output>.history.csv)");
  sub->add_option("--manifest", f.manifest, "Manifest path (default <output>.manifest.json)");
}

int cmd_train(TrainCmdFlags& f, std::ostream& out) {
  const Dataset ds = load_dataset(f.train.data);
  const ResolvedTraining r = resolve_training(f.train, ds.dim);
  const std::vector<LabeledSample> split = ds.samples_in(Split::train);
  const auto start = std::chrono::steady_clock::now();
  const TrainResult result = train(split, initial_encoder(r), r.config);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  const std::string history = f.history.empty() ? f.output + ".history.csv" : f.history;
  save_checkpoint(result.params, f.output);
  write_text(history, history_csv(result.history));
  Json config = training_config_json(r, f.train, true);
  config["output"] = f.output;
  config["history"] = history;
  config["manifest"] = manifest_path(f.manifest, f.output);
  write_manifest(manifest_path(f.manifest, f.output), "train", config, r.config.seed,
                 {{"checkpoint", f.output}, {"history", history}}, {{"wall_seconds", seconds}});
  out << "trained " << to_string(r.config.loss) << " for " << r.config.epochs << " epochs on " << split.size()
      << " samples";
  if (!result.history.epochs.empty()) out << ", final mean loss " << result.history.epochs.back().mean_loss;
  out << "\n";
  return kSuccess;
}

// ---------------------------------------------------------------- eval

struct EvalFlags {
  std::string data;
  std::string checkpoint;
  std::string split = "test";
  std::size_t n = 5;
  std::size_t k = 1;
  std::size_t q = 15;
  std::size_t trials = 2000;
  double p = 1.0;
  std::string seed;
  unsigned threads = 1;
  std::string output;
  std::string csv;
  std::string manifest;
};

void add_eval(CLI::App& app, EvalFlags& f) {
  auto* sub = app.add_subcommand("eval", "Episodic N-way K-shot evaluation");
  sub->add_option("--data", f.data, "Dataset file")->required();
  sub->add_option("--checkpoint", f.checkpoint, "GMML checkpoint")->required();
  sub->add_option("--split", f.split, "Split to sample episodes from")->check(CLI::IsMember({"train", "val", "test"}));
  sub->add_option("--n", f.n, "Classes per episode (N-way)");
  sub->add_option("--k", f.k, "Support samples per class (K-shot)");
  sub->add_option("--q", f.q, "Query samples per class");
  sub->add_option("--trials", f.trials, "Number of episodes");
  sub->add_option("--p", f.p, "Distance exponent of the nearest-mean classifier");
  sub->add_option("--seed", f.seed, "Seed (falls back to GMML_SEED)");
  sub->add_option("--threads", f.threads, "Worker threads for episodes");
  sub->add_option("-o,--output", f.output, "Report JSON path")->required();
  sub->add_option("--csv", f.csv, "Optional one-line CSV report");
  sub->add_option("--manifest", f.manifest, "Manifest path (default <output>.manifest.json)");
}

int cmd_eval(EvalFlags& f, std::ostream& out) {
  if (f.trials == 0) throw UsageError("--trials must be positive");
  if (!(f.p > 0.0)) throw UsageError("--p must be positive");
  const std::uint64_t seed = resolve_seed(f.seed);
  const Dataset ds = load_dataset(f.data);
  const MlpParams encoder = load_checkpoint(f.checkpoint);
  const std::vector<LabeledSample> split = ds.samples_in(*parse_split(f.split));
  const EvalReport report = evaluate(encoder, split, f.n, f.k, f.q, f.trials, f.p, seed, std::max(1u, f.threads));
  write_text(f.output, to_json(report) + "\n");
  if (!f.csv.empty()) write_text(f.csv, csv_header() + "\n" + to_csv_row(report) + "\n");
  const Json config = {{"data", f.data},         {"checkpoint", f.checkpoint},
                       {"split", f.split},       {"n", f.n},
                       {"k", f.k},               {"q", f.q},
                       {"trials", f.trials},     {"p", real(f.p)},
                       {"seed", std::to_string(seed)}, {"threads", f.threads},
                       {"output", f.output},     {"csv", f.csv},
                       {"manifest", manifest_path(f.manifest, f.output)}};
  Json artifacts = {{"report", f.output}};
  if (!f.csv.empty()) artifacts["csv"] = f.csv;
  write_manifest(manifest_path(f.manifest, f.output), "eval", config, seed, artifacts);
  out << f.n << "-way " << f.k << "-shot: " << std::fixed << std::setprecision(2) << 100.0 * report.mean_accuracy
      << "% +- " << 100.0 * report.ci_halfwidth << "% over " << report.trials << " episodes\n";
  return kSuccess;
}

// ---------------------------------------------------------------- compare

struct CompareFlags {
  TrainFlags train;
  std::string losses = "pn,nca,gm";
  std::size_t n = 5;
  std::string shots = "1,5";
  std::size_t q = 15;
  std::size_t trials = 2000;
  std::optional<double> eval_p;
  std::string split = "test";
  std::string output;
  std::string json;
  std::string manifest;
};

void add_compare(CLI::App& app, CompareFlags& f) {
  auto* sub = app.add_subcommand("compare", "Train each loss under one protocol and tabulate accuracy");
  add_train_flags(sub, f.train, false);
  sub->add_option("--losses", f.losses, "Comma-separated losses to compare");
  sub->add_option("--n", f.n, "Classes per episode (N-way)");
  sub->add_option("--shots", f.shots, "Comma-separated K values");
  sub->add_option("--q", f.q, "Query samples per class");
  sub->add_option("--trials", f.trials, "Episodes per setting");
  sub->add_option("--eval-p", f.eval_p, "Evaluation distance exponent (default: --p)");
  sub->add_option("--split", f.split, "Evaluation split")->check(CLI::IsMember({"train", "val", "test"}));
  sub->add_option("-o,--output", f.output, "Results CSV")->required();
  sub->add_option("--json", f.json, "Results JSON (default <output>.json)");
  sub->add_option("--manifest", f.manifest, "Manifest path (default <output>.manifest.json)");
}

struct CompareRow {
  std::string loss;
  std::size_t n_way = 0;
  std::size_t k_shot = 0;
  std::optional<EvalReport> report;
  std::string status = "ok";
};

void write_compare_tables(const std::vector<CompareRow>& rows, const std::string& csv_path,
                          const std::string& json_path) {
  std::ostringstream csv;
  csv << "loss,n_way,k_shot,mean,ci\n";
  Json list = Json::array();
  for (const auto& row : rows) {
    csv << row.loss << ',' << row.n_way << ',' << row.k_shot << ',';
    Json j = {{"loss", row.loss}, {"n_way", row.n_way}, {"k_shot", row.k_shot}};
    if (row.report) {
      csv << real(row.report->mean_accuracy) << ',' << real(row.report->ci_halfwidth) << '\n';
      j["mean"] = row.report->mean_accuracy;
      j["ci"] = row.report->ci_halfwidth;
    } else {
      csv << "FAILED,FAILED\n";
      j["mean"] = nullptr;
      j["ci"] = nullptr;
    }
    j["status"] = row.status;
    list.push_back(std::move(j));
  }
  write_text(csv_path, csv.str());
  write_text(json_path, Json{{"rows", list}}.dump(2) + "\n");
}

int cmd_compare(CompareFlags& f, std::ostream& out) {
  const auto names = parse_list<std::string>(f.losses, "--losses");
  const auto shots = parse_list<std::size_t>(f.shots, "--shots");
  if (names.empty() || shots.empty()) throw UsageError("--losses and --shots must be non-empty");
  for (const auto& name : names) {
    if (!parse_loss_kind(name)) throw UsageError("unknown loss '" + name + "' (known: pn, nca, gm, bce, asl)");
  }
  if (f.trials == 0) throw UsageError("--trials must be positive");
  const Dataset ds = load_dataset(f.train.data);
  const ResolvedTraining base = resolve_training(f.train, ds.dim);
  const double eval_p = f.eval_p.value_or(base.config.p);
  if (!(eval_p > 0.0)) throw UsageError("--eval-p must be positive");
  const std::string json_path = f.json.empty() ? f.output + ".json" : f.json;
  const std::vector<LabeledSample> train_split = ds.samples_in(Split::train);
  const std::vector<LabeledSample> eval_split = ds.samples_in(*parse_split(f.split));
  const MlpParams init = initial_encoder(base);

  std::vector<CompareRow> rows;
  bool failed = false;
  for (const auto& name : names) {
    TrainConfig config = base.config;
    config.loss = *parse_loss_kind(name);
    std::optional<MlpParams> trained;
    std::string status = "ok";
    try {
      trained = train(train_split, init, config).params;
    } catch (const Error& e) {
      status = std::string("training failed: ") + e.what();
    }
    for (std::size_t k : shots) {
      CompareRow row{name, f.n, k, std::nullopt, status};
      if (trained) {
        try {
          row.report = evaluate(*trained, eval_split, f.n, k, f.q, f.trials, eval_p, config.seed, config.threads);
        } catch (const Error& e) {
          row.status = std::string("evaluation failed: ") + e.what();
        }
      }
      failed = failed || !row.report;
      if (row.report) {
        out << name << " " << f.n << "-way " << k << "-shot: " << std::fixed << std::setprecision(2)
            << 100.0 * row.report->mean_accuracy << " +- " << 100.0 * row.report->ci_halfwidth << "\n";
      } else {
        out << name << " " << f.n << "-way " << k << "-shot: FAILED (" << row.status << ")\n";
      }
      rows.push_back(std::move(row));
      write_compare_tables(rows, f.output, json_path);
    }
  }

  Json config = training_config_json(base, f.train, false);
  config.update(Json{{"losses", f.losses},
                     {"n", f.n},
                     {"shots", f.shots},
                     {"q", f.q},
                     {"trials", f.trials},
                     {"eval-p", real(eval_p)},
                     {"split", f.split},
                     {"output", f.output},
                     {"json", json_path},
                     {"manifest", manifest_path(f.manifest, f.output)}});
  write_manifest(manifest_path(f.manifest, f.output), "compare", config, base.config.seed,
                 {{"csv", f.output}, {"json", json_path}});
  return failed ? kFailure : kSuccess;
}

// ---------------------------------------------------------------- verify

struct VerifyFlags {
  std::optional<std::size_t> trials;
  std::string seed;
  std::string inject_fault;
  std::string output = "verify-report.json";
  std::string manifest;
};

void add_verify(CLI::App& app, VerifyFlags& f) {
  auto* sub = app.add_subcommand("verify", "Run the randomized identity and gradient checks");
  sub->add_option("--trials", f.trials, "Override every check's trial count");
  sub->add_option("--seed", f.seed, "Seed (falls back to GMML_SEED)");
  sub->add_option("--inject-fault", f.inject_fault, "Test hook: corrupt a component (gradient)")
      ->check(CLI::IsMember({"", "gradient"}));
  sub->add_option("-o,--output", f.output, "Report JSON path");
  sub->add_option("--manifest", f.manifest, "Manifest path (default <output>.manifest.json)");
}

int cmd_verify(VerifyFlags& f, std::ostream& out) {
  VerifyOptions options;
  options.seed = resolve_seed(f.seed);
  options.trials = f.trials;
  options.fault = f.inject_fault == "gradient" ? Fault::corrupt_gradient : Fault::none;
  const VerifyReport report = run_verification(options);
  write_text(f.output, report.to_json() + "\n");
  Json config = {{"seed", std::to_string(options.seed)},
                 {"inject-fault", f.inject_fault},
                 {"output", f.output},
                 {"manifest", manifest_path(f.manifest, f.output)}};
  if (f.trials) config["trials"] = *f.trials;
  write_manifest(manifest_path(f.manifest, f.output), "verify", config, options.seed, {{"report", f.output}});
  for (const auto& c : report.checks) {
    out << (c.passed ? "PASS " : "FAIL ") << c.name << " (" << c.trials << " trials, max error " << c.max_error
        << ", tolerance " << c.tolerance << ")";
    if (!c.passed) out << " " << c.failure;
    out << "\n";
  }
  return report.all_passed() ? kSuccess : kFailure;
}

// ---------------------------------------------------------------- replay

const std::map<std::string, std::vector<std::string>> kArtifactFlags = {
    {"gen-data", {"output", "manifest"}},
    {"train", {"output", "history", "manifest"}},
    {"eval", {"output", "csv", "manifest"}},
    {"compare", {"output", "json", "manifest"}},
    {"verify", {"output", "manifest"}},
};

std::vector<std::string> replay_arguments(const std::string& manifest_file, const std::string& output_dir) {
  std::ifstream in(manifest_file);
  if (!in) throw Error(ErrorCode::io_failure, "cannot open " + manifest_file);
  Json m;
  try {
    m = Json::parse(in);
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::parse_failure, "manifest is not valid JSON: " + std::string(e.what()));
  }
  const std::string sub = m.at("subcommand").get<std::string>();
  const auto artifacts = kArtifactFlags.find(sub);
  if (artifacts == kArtifactFlags.end()) throw Error(ErrorCode::parse_failure, "unknown subcommand " + sub);
  std::vector<std::string> args{sub};
  for (auto it = m.at("config").begin(); it != m.at("config").end(); ++it) {
    std::string value = it->is_string() ? it->get<std::string>() : it->dump();
    if (value.empty()) continue;
    const auto& flags = artifacts->second;
    if (!output_dir.empty() && std::find(flags.begin(), flags.end(), it.key()) != flags.end()) {
      value = (fs::path(output_dir) / fs::path(value).filename()).string();
    }
    args.push_back("--" + it.key());
    args.push_back(value);
  }
  return args;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Few-shot metric learning laboratory: geometric-mean loss and baselines"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kToolVersion));

  GenDataFlags gen;
  TrainCmdFlags train_flags;
  EvalFlags eval_flags;
  CompareFlags compare_flags;
  VerifyFlags verify_flags;
  std::string replay_manifest;
  std::string replay_dir;
  add_gen_data(app, gen);
  add_train(app, train_flags);
  add_eval(app, eval_flags);
  add_compare(app, compare_flags);
  add_verify(app, verify_flags);
  auto* replay = app.add_subcommand("replay", "Re-run a command from its manifest");
  replay->add_option("manifest", replay_manifest, "Manifest JSON")->required();
  replay->add_option("--output-dir", replay_dir, "Redirect the artifacts into this directory");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kSuccess : kUsage;
  }

  try {
    const CLI::App* sub = app.get_subcommands().front();
    const std::string name = sub->get_name();
    if (name == "gen-data") return cmd_gen_data(*sub, gen, out);
    if (name == "train") return cmd_train(train_flags, out);
    if (name == "eval") return cmd_eval(eval_flags, out);
    if (name == "compare") return cmd_compare(compare_flags, out);
    if (name == "verify") return cmd_verify(verify_flags, out);
    if (name == "replay") return run(replay_arguments(replay_manifest, replay_dir), out, err);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kUsage;
}

}  // namespace gmml::cli
