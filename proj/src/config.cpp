#include "nrc/config.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"

namespace nrc {

using nlohmann::json;

GraphParams AdaptConfig::graph_params() const {
  GraphParams g;
  g.k = num_neighbors;
  g.m = num_expanded;
  g.u = density_neighbors;
  g.v = density_check_neighbors;
  g.r = affinity_floor;
  g.use_affinity = use_affinity;
  g.expanded = use_loss_e;
  g.density = mode == AdaptMode::nrc_plus_plus;
  return g;
}

LossFlags AdaptConfig::loss_flags() const {
  LossFlags f;
  f.use_n = use_loss_n;
  f.use_e = use_loss_e;
  f.use_self = use_loss_self;
  f.use_div = use_loss_div;
  f.use_d = mode == AdaptMode::nrc_plus_plus;
  f.dedupe_expanded = dedupe_expanded;
  f.use_affinity = use_affinity;
  return f;
}

Architecture AdaptConfig::architecture(std::size_t input_dim, std::size_t num_classes) const {
  Architecture a;
  a.input_dim = input_dim;
  a.hidden_dims = hidden_dims;
  a.feature_dim = feature_dim;
  a.num_classes = num_classes;
  a.batch_norm = batch_norm;
  return a;
}

void AdaptConfig::validate() const {
  auto fail = [](const std::string& msg) { throw InvalidInput("config: " + msg); };
  if (num_neighbors < 1) fail("num_neighbors (K) must be >= 1");
  if (num_expanded < 1) fail("num_expanded (M) must be >= 1");
  if (mode == AdaptMode::nrc_plus_plus && !(density_neighbors > density_check_neighbors && density_check_neighbors >= 1)) {
    fail("nrc++ needs density_neighbors (U) > density_check_neighbors (V) >= 1");
  }
  if (!(affinity_floor >= -1.0 && affinity_floor <= 1.0)) fail("affinity_floor (r) must be in [-1, 1]");
  if (!(momentum >= 0.0 && momentum < 1.0)) fail("momentum must be in [0, 1)");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (batch_norm && batch_size < 2) fail("batch norm needs batch_size >= 2");
  if (!(lr_backbone >= 0.0) || !(lr_head >= 0.0)) fail("learning rates must be non-negative");
  if (!(pretrain_lr_backbone >= 0.0) || !(pretrain_lr_head >= 0.0)) fail("learning rates must be non-negative");
  if (!(weight_decay >= 0.0)) fail("weight_decay must be non-negative");
  if (!(label_smoothing >= 0.0 && label_smoothing < 1.0)) fail("label_smoothing must be in [0, 1)");
  if (feature_dim < 1) fail("feature_dim must be >= 1");
  for (std::size_t h : hidden_dims) {
    if (h < 1) fail("hidden_dims entries must be >= 1");
  }
  if (bank_mode == BankMode::fifo && bank_capacity < batch_size) fail("fifo bank_capacity must be >= batch_size");
}

std::string to_string(AdaptMode mode) { return mode == AdaptMode::nrc ? "nrc" : "nrc++"; }

AdaptMode parse_adapt_mode(const std::string& text) {
  if (text == "nrc") return AdaptMode::nrc;
  if (text == "nrc++") return AdaptMode::nrc_plus_plus;
  throw InvalidInput("unknown mode '" + text + "' (expected nrc or nrc++)");
}

std::string config_to_json(const AdaptConfig& c) {
  json j;
  j["num_neighbors"] = c.num_neighbors;
  j["num_expanded"] = c.num_expanded;
  j["density_neighbors"] = c.density_neighbors;
  j["density_check_neighbors"] = c.density_check_neighbors;
  j["affinity_floor"] = c.affinity_floor;
  j["batch_size"] = c.batch_size;
  j["epochs"] = c.epochs;
  j["lr_backbone"] = c.lr_backbone;
  j["lr_head"] = c.lr_head;
  j["momentum"] = c.momentum;
  j["weight_decay"] = c.weight_decay;
  j["seed"] = c.seed;
  j["mode"] = to_string(c.mode);
  j["use_affinity"] = c.use_affinity;
  j["dedupe_expanded"] = c.dedupe_expanded;
  j["use_loss_n"] = c.use_loss_n;
  j["use_loss_e"] = c.use_loss_e;
  j["use_loss_self"] = c.use_loss_self;
  j["use_loss_div"] = c.use_loss_div;
  j["bank_mode"] = c.bank_mode == BankMode::full ? "full" : "fifo";
  j["bank_capacity"] = c.bank_capacity;
  j["bn_train_mode"] = c.bn_train_mode;
  j["pretrain_epochs"] = c.pretrain_epochs;
  j["pretrain_lr_backbone"] = c.pretrain_lr_backbone;
  j["pretrain_lr_head"] = c.pretrain_lr_head;
  j["label_smoothing"] = c.label_smoothing;
  j["hidden_dims"] = c.hidden_dims;
  j["feature_dim"] = c.feature_dim;
  j["batch_norm"] = c.batch_norm;
  return j.dump(2) + "\n";
}

namespace {

template <typename T>
T read_as(const json& value, const std::string& key) {
  try {
    if constexpr (std::is_same_v<T, bool>) {
      if (!value.is_boolean()) throw InvalidInput("");
    } else if constexpr (std::is_integral_v<T>) {
      if (!value.is_number_unsigned()) throw InvalidInput("");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!value.is_number()) throw InvalidInput("");
    }
    return value.get<T>();
  } catch (const std::exception&) {
    throw InvalidInput("config: key '" + key + "' has the wrong type");
  }
}

}  // namespace

AdaptConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw InvalidInput(std::string("config: malformed JSON: ") + e.what());
  }
  if (!j.is_object()) throw InvalidInput("config: top level must be an object");

  AdaptConfig c;
  for (const auto& [key, value] : j.items()) {
    if (key == "num_neighbors" || key == "K") c.num_neighbors = read_as<std::size_t>(value, key);
    else if (key == "num_expanded" || key == "M") c.num_expanded = read_as<std::size_t>(value, key);
    else if (key == "density_neighbors" || key == "U") c.density_neighbors = read_as<std::size_t>(value, key);
    else if (key == "density_check_neighbors" || key == "V") c.density_check_neighbors = read_as<std::size_t>(value, key);
    else if (key == "affinity_floor" || key == "r") c.affinity_floor = read_as<double>(value, key);
    else if (key == "batch_size") c.batch_size = read_as<std::size_t>(value, key);
    else if (key == "epochs") c.epochs = read_as<std::size_t>(value, key);
    else if (key == "lr_backbone") c.lr_backbone = read_as<double>(value, key);
    else if (key == "lr_head") c.lr_head = read_as<double>(value, key);
    else if (key == "momentum") c.momentum = read_as<double>(value, key);
    else if (key == "weight_decay") c.weight_decay = read_as<double>(value, key);
    else if (key == "seed") c.seed = read_as<std::uint64_t>(value, key);
    else if (key == "mode") c.mode = parse_adapt_mode(read_as<std::string>(value, key));
    else if (key == "use_affinity") c.use_affinity = read_as<bool>(value, key);
    else if (key == "dedupe_expanded") c.dedupe_expanded = read_as<bool>(value, key);
    else if (key == "use_loss_n") c.use_loss_n = read_as<bool>(value, key);
    else if (key == "use_loss_e") c.use_loss_e = read_as<bool>(value, key);
    else if (key == "use_loss_self") c.use_loss_self = read_as<bool>(value, key);
    else if (key == "use_loss_div") c.use_loss_div = read_as<bool>(value, key);
    else if (key == "bank_mode") {
      const auto mode = read_as<std::string>(value, key);
      if (mode == "full") c.bank_mode = BankMode::full;
      else if (mode == "fifo") c.bank_mode = BankMode::fifo;
      else throw InvalidInput("config: bank_mode must be 'full' or 'fifo'");
    }
    else if (key == "bank_capacity") c.bank_capacity = read_as<std::size_t>(value, key);
    else if (key == "bn_train_mode") c.bn_train_mode = read_as<bool>(value, key);
    else if (key == "pretrain_epochs") c.pretrain_epochs = read_as<std::size_t>(value, key);
    else if (key == "pretrain_lr_backbone") c.pretrain_lr_backbone = read_as<double>(value, key);
    else if (key == "pretrain_lr_head") c.pretrain_lr_head = read_as<double>(value, key);
    else if (key == "label_smoothing") c.label_smoothing = read_as<double>(value, key);
    else if (key == "hidden_dims") {
      if (!value.is_array()) throw InvalidInput("config: hidden_dims must be an array");
      c.hidden_dims.clear();
      for (const auto& w : value) c.hidden_dims.push_back(read_as<std::size_t>(w, key));
    }
    else if (key == "feature_dim") c.feature_dim = read_as<std::size_t>(value, key);
    else if (key == "batch_norm") c.batch_norm = read_as<bool>(value, key);
    else throw InvalidInput("config: unknown key '" + key + "'");
  }
  c.validate();
  return c;
}

AdaptConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return config_from_json(buf.str());
}

}  // namespace nrc
