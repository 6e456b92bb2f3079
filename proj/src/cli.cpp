#include "nrc/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "nrc/banks.hpp"
#include "nrc/checkpoint.hpp"
#include "nrc/config.hpp"
#include "nrc/data.hpp"
#include "nrc/diagnostics.hpp"
#include "nrc/error.hpp"
#include "nrc/graph.hpp"
#include "nrc/parallel.hpp"
#include "nrc/trainer.hpp"

namespace nrc {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> mode;
  std::size_t threads = 0;

  // gen-data
  std::string out_dir;
  std::size_t classes = 4;
  std::size_t dim = 2;
  std::size_t per_class = 500;
  ShiftParams shift;

  // pretrain / adapt / eval / diagnose
  std::string source;
  std::string target;
  std::string data;
  std::string model;
  std::string pre_model;
  std::string out;
  std::string log;
  std::string graph_out;
  std::string predictions;
  std::optional<std::size_t> num_classes;
  std::size_t max_k = 10;
};

void require_file(const std::string& path, const char* what) {
  if (path.empty()) throw UsageError(std::string("missing ") + what);
  if (!fs::is_regular_file(path)) throw IoError(std::string(what) + " not found: " + path);
}

void require_output(const std::string& path, const char* what) {
  if (path.empty()) throw UsageError(std::string("missing ") + what);
  const fs::path parent = fs::path(path).parent_path();
  if (!parent.empty() && !fs::is_directory(parent)) throw IoError(std::string(what) + " directory does not exist: " + path);
}

std::string sibling(const std::string& path, const std::string& suffix) {
  fs::path p(path);
  p.replace_extension();
  return p.string() + suffix;
}

AdaptConfig resolve_config(const Options& o, bool required) {
  AdaptConfig c;
  if (!o.config_path.empty()) {
    require_file(o.config_path, "config");
    c = load_config(o.config_path);
  } else if (required) {
    throw UsageError("--config is required");
  }
  if (o.seed) c.seed = *o.seed;
  if (o.mode) c.mode = parse_adapt_mode(*o.mode);
  c.validate();
  return c;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path);
  f << text;
  if (!f) throw IoError("write failed: " + path);
}

void write_resolved(const std::string& path, const std::string& command, const AdaptConfig& c, json extra) {
  json j;
  j["command"] = command;
  j["config"] = json::parse(config_to_json(c));
  if (!extra.is_null()) j["inputs"] = std::move(extra);
  write_text(path, j.dump(2) + "\n");
}

std::size_t infer_classes(const Labels& labels) {
  if (labels.empty()) throw InvalidInput("labels are empty");
  return static_cast<std::size_t>(*std::max_element(labels.begin(), labels.end())) + 1;
}

int gen_data(const Options& o, std::ostream& out) {
  if (o.out_dir.empty()) throw UsageError("missing --out-dir");
  if (!fs::is_directory(o.out_dir)) throw IoError("output directory does not exist: " + o.out_dir);
  AdaptConfig c = resolve_config(o, false);
  const auto m = generate_synthetic_shift(o.classes, o.dim, o.per_class, o.shift, c.seed);
  const std::string src = (fs::path(o.out_dir) / "source.nrcf").string();
  const std::string tgt = (fs::path(o.out_dir) / "target.nrcf").string();
  save_features(src, m.source.features, &m.source.labels);
  save_features(tgt, m.target.features, &m.target.labels);
  json extra = {{"classes", o.classes},
                {"dim", o.dim},
                {"per_class", o.per_class},
                {"rotation_degrees", o.shift.rotation_degrees},
                {"translation", o.shift.translation},
                {"noise_scale", o.shift.noise_scale},
                {"radius", o.shift.radius}};
  write_resolved((fs::path(o.out_dir) / "gen-data.config.json").string(), "gen-data", c, extra);
  out << "wrote " << src << " and " << tgt << "\n";
  return kExitOk;
}

int pretrain(const Options& o, std::ostream& out) {
  AdaptConfig c = resolve_config(o, true);
  require_file(o.source, "--source");
  require_output(o.out, "--out");
  const FeatureFile src = load_features(o.source);
  if (!src.labels) throw InvalidInput("source file has no labels");
  const std::size_t classes = o.num_classes.value_or(infer_classes(*src.labels));
  const auto result = pretrain_source(c, src.features, *src.labels, classes);
  for (const auto& w : result.warnings) out << "warning: " << w << "\n";
  save_checkpoint(o.out, result.params);

  std::ostringstream log;
  log << "epoch,loss\n";
  char buf[64];
  for (std::size_t e = 0; e < result.epoch_loss.size(); ++e) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g\n", e, result.epoch_loss[e]);
    log << buf;
  }
  write_text(o.log.empty() ? sibling(o.out, ".log.csv") : o.log, log.str());
  write_resolved(sibling(o.out, ".config.json"), "pretrain", c,
                 {{"source", o.source}, {"num_classes", classes}});
  out << "source accuracy " << accuracy(predict(result.params, src.features), *src.labels) << "\n";
  return kExitOk;
}

int adapt_command(const Options& o, std::ostream& out) {
  AdaptConfig c = resolve_config(o, true);
  require_file(o.model, "--model");
  require_file(o.target, "--target");
  require_output(o.out, "--out");
  const ModelParams source_model = load_checkpoint(o.model);
  const FeatureFile tgt = load_features(o.target);
  const auto result = adapt(c, source_model, tgt.features);
  save_checkpoint(o.out, result.params);

  std::ostringstream log;
  write_training_log(log, result.log);
  write_text(o.log.empty() ? sibling(o.out, ".log.csv") : o.log, log.str());
  write_resolved(sibling(o.out, ".config.json"), "adapt", c, {{"model", o.model}, {"target", o.target}});
  out << "iterations " << result.log.size() << "\n";
  if (tgt.labels) {
    out << "target accuracy " << accuracy(predict(result.params, tgt.features), *tgt.labels) << "\n";
  }
  return kExitOk;
}

int eval_command(const Options& o, std::ostream& out) {
  AdaptConfig c = resolve_config(o, false);
  require_file(o.model, "--model");
  require_file(o.data, "--data");
  require_output(o.out, "--out");
  const ModelParams params = load_checkpoint(o.model);
  const FeatureFile data = load_features(o.data);
  if (!data.labels) throw InvalidInput("evaluation data has no labels");
  const Matrix p = predict(params, data.features);
  const double acc = accuracy(p, *data.labels);
  const auto per_class = per_class_accuracy(p, *data.labels);

  json report = {{"accuracy", acc}, {"per_class_mean", per_class.mean}, {"per_class", per_class.recall}};
  write_text(o.out, report.dump(2) + "\n");
  if (!o.predictions.empty()) {
    require_output(o.predictions, "--predictions");
    const auto pred = predicted_labels(p);
    std::ostringstream csv;
    csv << "index,predicted,label\n";
    for (std::size_t i = 0; i < pred.size(); ++i) csv << i << ',' << pred[i] << ',' << (*data.labels)[i] << '\n';
    write_text(o.predictions, csv.str());
  }
  write_resolved(sibling(o.out, ".config.json"), "eval", c, {{"model", o.model}, {"data", o.data}});
  out << "accuracy " << acc << "\nper-class " << per_class.mean << "\n";
  return kExitOk;
}

int diagnose(const Options& o, std::ostream& out) {
  AdaptConfig c = resolve_config(o, false);
  require_file(o.model, "--model");
  require_file(o.data, "--data");
  require_output(o.out, "--out");
  if (!o.pre_model.empty()) require_file(o.pre_model, "--pre-model");
  const FeatureFile data = load_features(o.data);
  std::optional<std::span<const std::uint32_t>> truth;
  if (data.labels) truth = std::span<const std::uint32_t>(*data.labels);

  std::ostringstream csv;
  write_purity_csv_header(csv);
  if (!o.pre_model.empty()) {
    const MemoryBanks pre = initialize_banks(load_checkpoint(o.pre_model), data.features);
    write_purity_csv(csv, "pre", neighbor_purity(pre.features(), pre.scores(), truth, o.max_k));
  }
  const MemoryBanks post = initialize_banks(load_checkpoint(o.model), data.features);
  const auto report = neighbor_purity(post.features(), post.scores(), truth, o.max_k);
  write_purity_csv(csv, "post", report);
  write_text(o.out, csv.str());

  if (!o.graph_out.empty()) {
    require_output(o.graph_out, "--graph-out");
    std::vector<std::size_t> rows(post.size());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    const GraphParams gp = c.graph_params();
    const BatchGraph g = build_batch_graph(post.features(), rows, gp);
    std::ostringstream graph;
    write_graph_csv(graph, g, gp, {});
    write_text(o.graph_out, graph.str());
  }
  write_resolved(sibling(o.out, ".config.json"), "diagnose", c,
                 {{"model", o.model}, {"pre_model", o.pre_model}, {"data", o.data}, {"max_k", o.max_k}});
  out << "all-shared(k=" << report.points.back().k << ") " << report.points.back().all_shared << "\n";
  return kExitOk;
}

void add_common(CLI::App* cmd, Options& o) {
  cmd->add_option("--config", o.config_path, "JSON config file");
  cmd->add_option("--seed", o.seed, "seed override");
  cmd->add_option("--mode", o.mode, "method override")->check(CLI::IsMember({"nrc", "nrc++"}));
  cmd->add_option("--threads", o.threads, "worker threads (0 = available parallelism)");
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"Neighborhood reciprocity clustering for source-free domain adaptation", "nrc"};
  app.require_subcommand(1, 1);

  auto* gen = app.add_subcommand("gen-data", "write a synthetic source/target pair");
  add_common(gen, o);
  gen->add_option("--out-dir", o.out_dir, "output directory")->required();
  gen->add_option("--classes", o.classes, "number of classes");
  gen->add_option("--dim", o.dim, "input dimension");
  gen->add_option("--per-class", o.per_class, "samples per class per domain");
  gen->add_option("--rotation", o.shift.rotation_degrees, "target rotation in degrees");
  gen->add_option("--translation", o.shift.translation, "target translation");
  gen->add_option("--noise", o.shift.noise_scale, "cluster standard deviation");
  gen->add_option("--radius", o.shift.radius, "radius of the class means");

  auto* pre = app.add_subcommand("pretrain", "train the source model");
  add_common(pre, o);
  pre->get_option("--config")->required();
  pre->add_option("--source", o.source, "labeled source features")->required();
  pre->add_option("--out", o.out, "output checkpoint")->required();
  pre->add_option("--log", o.log, "per-epoch loss CSV");
  pre->add_option("--classes", o.num_classes, "number of classes (default: max label + 1)");

  auto* ad = app.add_subcommand("adapt", "adapt a source model to target features");
  add_common(ad, o);
  ad->get_option("--config")->required();
  ad->add_option("--model", o.model, "source checkpoint")->required();
  ad->add_option("--target", o.target, "target features")->required();
  ad->add_option("--out", o.out, "adapted checkpoint")->required();
  ad->add_option("--log", o.log, "training log CSV");

  auto* ev = app.add_subcommand("eval", "accuracy of a checkpoint on labeled features");
  add_common(ev, o);
  ev->add_option("--model", o.model, "checkpoint")->required();
  ev->add_option("--data", o.data, "labeled features")->required();
  ev->add_option("--out", o.out, "metrics JSON")->required();
  ev->add_option("--predictions", o.predictions, "per-sample prediction CSV");

  auto* dg = app.add_subcommand("diagnose", "neighbor purity report");
  add_common(dg, o);
  dg->add_option("--model", o.model, "checkpoint (post stage)")->required();
  dg->add_option("--pre-model", o.pre_model, "checkpoint for the pre stage");
  dg->add_option("--data", o.data, "target features, labels optional")->required();
  dg->add_option("--out", o.out, "purity CSV")->required();
  dg->add_option("--max-k", o.max_k, "largest neighborhood size");
  dg->add_option("--graph-out", o.graph_out, "dump the neighbor graph over the whole bank");

  std::vector<const char*> argv;
  argv.reserve(args.size());
  for (const auto& a : args) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error_code=" << kExitUsage << " " << e.what() << "\n" << app.help();
    return kExitUsage;
  }

  try {
    set_thread_count(o.threads);
    if (gen->parsed()) return gen_data(o, out);
    if (pre->parsed()) return pretrain(o, out);
    if (ad->parsed()) return adapt_command(o, out);
    if (ev->parsed()) return eval_command(o, out);
    return diagnose(o, out);
  } catch (const UsageError& e) {
    err << "error_code=" << kExitUsage << " " << e.what() << "\n" << app.help();
    return kExitUsage;
  } catch (const NumericError& e) {
    err << "error_code=" << kExitNumeric << " " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "error_code=" << kExitData << " " << e.what() << "\n";
    return kExitData;
  }
}

}  // namespace nrc
