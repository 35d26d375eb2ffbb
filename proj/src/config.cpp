#include "supermask/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace supermask {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || end != v.data() + v.size()) {
    throw std::invalid_argument("config: " + key + " expects a number, got '" + v + "'");
  }
  return out;
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || end != v.data() + v.size()) {
    throw std::invalid_argument("config: " + key + " expects a non-negative integer, got '" + v + "'");
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument("config: " + key + " expects true/false, got '" + v + "'");
}

constexpr std::string_view kSqrt3 = "1.7320508075688772";

using Entries = std::vector<std::pair<std::string_view, std::string_view>>;

// Signed Supermask runs. Weights: signed constants; ELUS is He (fan-in) scaled by √3.
const Entries kFcnSigned = {
    {"arch.name", "fcn"},        {"data.dataset", "mnist"},     {"optim.lr", "0.05"},
    {"optim.decay_rate", "0.96"}, {"optim.decay_step", "10"},   {"optim.weight_decay", "5e-4"},
    {"optim.decay_form", "l2_loss"},
    {"optim.momentum", "0.9"},   {"optim.epochs", "100"},       {"mask.tau", "0.01"},
    {"mask.init", "elus_uniform"}, {"init.distribution", "signed_constant"}, {"init.fan_mode", "fan_in"},
};

const Entries kConvSigned = {
    {"data.dataset", "cifar10"}, {"optim.lr", "0.05"},        {"optim.decay_rate", "0.96"},
    {"optim.decay_step", "10"},  {"optim.weight_decay", "5e-4"}, {"optim.momentum", "0.9"},
    {"optim.decay_form", "l2_loss"},
    {"optim.epochs", "100"},     {"mask.tau", "0.01"},        {"mask.init", "elus_uniform"},
    {"init.distribution", "signed_constant"}, {"init.fan_mode", "fan_in"},
    {"init.scheme", "elus"},     {"init.he_scale", kSqrt3},
};

const Entries kBaseline = {
    {"mask.mode", "baseline"}, {"init.distribution", "uniform"}, {"init.fan_mode", "fan_in"},
    {"optim.decay_rate", "0.96"}, {"optim.momentum", "0.9"}, {"optim.epochs", "50"},
    {"optim.decay_form", "l2_loss"},
};

struct Preset {
  std::string_view name;
  std::vector<Entries> parts;
};

const std::vector<Preset>& presets() {
  static const std::vector<Preset> p = {
      {"fcn-elus", {kFcnSigned, {{"init.scheme", "elus"}, {"init.he_scale", kSqrt3}}}},
      {"fcn-he", {kFcnSigned, {{"init.scheme", "he"}}}},
      {"fcn-xavier", {kFcnSigned, {{"init.scheme", "xavier"}}}},
      {"fcn-binary", {kFcnSigned, {{"init.scheme", "elus"}, {"init.he_scale", kSqrt3}, {"mask.mode", "binary"}}}},
      {"fcn-elus-xavier-mask",
       {kFcnSigned, {{"init.scheme", "elus"}, {"init.he_scale", kSqrt3}, {"mask.init", "xavier_uniform"}}}},
      {"fcn-elus-uniform",
       {kFcnSigned, {{"init.scheme", "elus"}, {"init.he_scale", kSqrt3}, {"init.distribution", "uniform"}}}},
      {"conv2", {kConvSigned, {{"arch.name", "conv2"}, {"optim.lr", "0.02"}, {"optim.decay_step", "5"}}}},
      {"conv4", {kConvSigned, {{"arch.name", "conv4"}}}},
      {"conv6", {kConvSigned, {{"arch.name", "conv6"}}}},
      {"conv8", {kConvSigned, {{"arch.name", "conv8"}}}},
      {"sinn1", {kConvSigned, {{"arch.name", "conv4"}, {"optim.lr", "0.01"}, {"optim.weight_decay", "5e-4"}}}},
      {"sinn2", {kConvSigned, {{"arch.name", "conv4"}, {"optim.lr", "0.008"}, {"optim.weight_decay", "3e-4"}}}},
      {"fcn-baseline-he",
       {kBaseline,
        {{"arch.name", "fcn"}, {"data.dataset", "mnist"}, {"init.scheme", "he"}, {"optim.lr", "0.008"},
         {"optim.decay_step", "10"}, {"optim.weight_decay", "7e-4"}}}},
      {"fcn-baseline-xavier",
       {kBaseline,
        {{"arch.name", "fcn"}, {"data.dataset", "mnist"}, {"init.scheme", "xavier"}, {"optim.lr", "0.008"},
         {"optim.decay_step", "10"}, {"optim.weight_decay", "7e-4"}}}},
      {"fcn-baseline-elu",
       {kBaseline,
        {{"arch.name", "fcn"}, {"data.dataset", "mnist"}, {"init.scheme", "elus"}, {"init.he_scale", kSqrt3},
         {"optim.lr", "0.008"}, {"optim.decay_step", "10"}, {"optim.weight_decay", "7e-4"}}}},
      {"conv2-baseline",
       {kBaseline,
        {{"arch.name", "conv2"}, {"data.dataset", "cifar10"}, {"init.scheme", "he"}, {"optim.lr", "0.008"},
         {"optim.decay_step", "5"}, {"optim.weight_decay", "7e-4"}}}},
      {"conv4-baseline",
       {kBaseline,
        {{"arch.name", "conv4"}, {"data.dataset", "cifar10"}, {"init.scheme", "he"}, {"optim.lr", "0.008"},
         {"optim.decay_step", "10"}, {"optim.weight_decay", "7e-4"}}}},
      {"conv6-baseline",
       {kBaseline,
        {{"arch.name", "conv6"}, {"data.dataset", "cifar10"}, {"init.scheme", "he"}, {"optim.lr", "0.01"},
         {"optim.decay_step", "10"}, {"optim.weight_decay", "7e-4"}}}},
      {"conv8-baseline",
       {kBaseline,
        {{"arch.name", "conv8"}, {"data.dataset", "cifar10"}, {"init.scheme", "he"}, {"optim.lr", "0.002"},
         {"optim.decay_step", "10"}, {"optim.weight_decay", "3e-4"}}}},
  };
  return p;
}

const std::vector<std::string_view> kMaskKeys = {"mask.tau",  "mask.tau_n",     "mask.tau_p",
                                                 "mask.init", "mask.init_scale", "mask.initial_pruning_rate"};

}  // namespace

const std::vector<Config::KeyInfo>& Config::keys() {
  static const std::vector<KeyInfo> k = {
      {"arch.name", "fcn", "fcn, conv2, conv4, conv6, conv8 or custom"},
      {"arch.layers", "", "custom layer list, e.g. conv:64,pool,flatten,dense:10"},
      {"arch.input", "", "custom input shape HxWxC, e.g. 28x28x1"},
      {"data.dataset", "mnist", "mnist or cifar10"},
      {"data.dir", "data", "directory holding the dataset files"},
      {"data.train_limit", "0", "use only the first N training images (0 = all)"},
      {"data.test_limit", "0", "use only the first N test images (0 = all)"},
      {"init.scheme", "elus", "he, xavier, elu or elus"},
      {"init.distribution", "signed_constant", "signed_constant or uniform"},
      {"init.fan_mode", "fan_out", "fan_out or fan_in"},
      {"init.rule", "combined", "ELU/ELUS constant: combined, forward or backward"},
      {"init.he_scale", "0", "ELUS as He scaled by this factor (0 = use the ELUS rule)"},
      {"init.p0", "auto", "initial zero-mask probability for ELUS; auto = implied by the thresholds"},
      {"init.alpha", "1", "ELU alpha"},
      {"mask.mode", "signed", "signed, binary or baseline"},
      {"mask.tau", "", "symmetric threshold: tau_n = -tau, tau_p = tau (default 0.01)"},
      {"mask.tau_n", "", "negative threshold (with mask.tau_p)"},
      {"mask.tau_p", "", "positive threshold (with mask.tau_n)"},
      {"mask.initial_pruning_rate", "", "choose thresholds to prune this fraction at init"},
      {"mask.init", "xavier_uniform", "xavier_uniform or elus_uniform"},
      {"mask.init_scale", "1.7320508075688772", "scale on He variance for elus_uniform"},
      {"optim.lr", "0.05", "initial learning rate"},
      {"optim.momentum", "0.9", "SGD momentum"},
      {"optim.weight_decay", "5e-4", "L2 coefficient on the trained tensors"},
      {"optim.decay_form", "coupled", "coupled (g + wd*p) or l2_loss (g + 2*wd*p)"},
      {"optim.decay_rate", "0.96", "staircase decay factor"},
      {"optim.decay_step", "10", "epochs per decay step"},
      {"optim.epochs", "100", "training epochs"},
      {"train.batch_size", "64", "minibatch size"},
      {"train.eval_batch", "1000", "evaluation chunk size"},
      {"train.seed", "0", "root seed"},
      {"train.checked", "false", "finite-value checks after every kernel"},
  };
  return k;
}

Config Config::parse(std::string_view text, std::string_view origin) {
  Config c;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const std::size_t nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const std::size_t hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw std::invalid_argument(std::string(origin) + ":" + std::to_string(line_no) + ": expected key = value");
    }
    try {
      c.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(std::string(origin) + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return c;
}

Config Config::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

Config Config::preset(std::string_view name) {
  for (const Preset& p : presets()) {
    if (p.name != name) continue;
    Config c;
    for (const Entries& part : p.parts) {
      for (const auto& [k, v] : part) c.set(k, v);
    }
    return c;
  }
  throw std::invalid_argument("unknown preset '" + std::string(name) + "'");
}

std::vector<std::string> Config::preset_names() {
  std::vector<std::string> out;
  for (const Preset& p : presets()) out.emplace_back(p.name);
  return out;
}

void Config::set(std::string_view key, std::string_view value) {
  const auto& k = keys();
  if (std::none_of(k.begin(), k.end(), [&](const KeyInfo& i) { return i.key == key; })) {
    throw std::invalid_argument("unknown config key '" + std::string(key) + "'");
  }
  values_[std::string(key)] = std::string(value);
}

void Config::apply_override(std::string_view assignment) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string_view::npos) throw std::invalid_argument("override must be key=value: " + std::string(assignment));
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void Config::merge(const Config& other) {
  for (const auto& [k, v] : other.values_) values_[k] = v;
}

bool Config::has(std::string_view key) const { return values_.find(key) != values_.end(); }

std::string Config::get(std::string_view key) const {
  if (auto it = values_.find(key); it != values_.end()) return it->second;
  for (const KeyInfo& i : keys()) {
    if (i.key == key) return std::string(i.fallback);
  }
  throw std::invalid_argument("unknown config key '" + std::string(key) + "'");
}

std::string Config::resolved_text() const {
  std::vector<std::string> lines;
  for (const KeyInfo& i : keys()) {
    const std::string v = get(i.key);
    if (v.empty() && !has(i.key)) continue;
    lines.push_back(std::string(i.key) + " = " + v);
  }
  std::sort(lines.begin(), lines.end());
  std::string out;
  for (const std::string& l : lines) out += l + "\n";
  return out;
}

std::uint64_t Config::digest() const {
  // The data location is not part of the experiment's identity.
  Config c = *this;
  c.values_.erase("data.dir");
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : c.resolved_text()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string digest_hex(std::uint64_t digest) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(digest));
  return buf;
}

TrainConfig TrainConfig::from(const Config& cfg) {
  auto num = [&](std::string_view k) { return to_double(std::string(k), cfg.get(k)); };
  auto uint = [&](std::string_view k) { return to_uint(std::string(k), cfg.get(k)); };
  TrainConfig t;

  const std::string arch = cfg.get("arch.name");
  if (arch == "custom") {
    if (cfg.get("arch.layers").empty() || cfg.get("arch.input").empty()) {
      throw std::invalid_argument("config: custom architectures need arch.layers and arch.input");
    }
    t.arch = parse_architecture(cfg.get("arch.layers"), parse_shape(cfg.get("arch.input")));
  } else {
    if (cfg.has("arch.layers") || cfg.has("arch.input")) {
      throw std::invalid_argument("config: arch.layers/arch.input require arch.name = custom");
    }
    t.arch = build_architecture(arch);
  }

  t.dataset = cfg.get("data.dataset");
  if (t.dataset != "mnist" && t.dataset != "cifar10") throw std::invalid_argument("config: unknown data.dataset");
  t.data_dir = cfg.get("data.dir");
  t.train_limit = uint("data.train_limit");
  t.test_limit = uint("data.test_limit");

  InitSpec& w = t.init.weights;
  w.scheme = parse_init_scheme(cfg.get("init.scheme"));
  w.distribution = parse_init_distribution(cfg.get("init.distribution"));
  w.fan_mode = parse_fan_mode(cfg.get("init.fan_mode"));
  w.rule = parse_elus_rule(cfg.get("init.rule"));
  w.he_scale = num("init.he_scale");
  w.alpha = num("init.alpha");
  if (w.he_scale < 0.0) throw std::invalid_argument("config: init.he_scale must be non-negative");
  if (!(w.alpha > 0.0)) throw std::invalid_argument("config: init.alpha must be positive");
  const std::string p0 = cfg.get("init.p0");
  t.init.p0 = p0 == "auto" ? -1.0 : num("init.p0");
  if (p0 != "auto" && !(t.init.p0 >= 0.0 && t.init.p0 < 1.0)) throw std::invalid_argument("config: init.p0 must lie in [0, 1)");

  const std::string mode = cfg.get("mask.mode");
  if (mode == "baseline") {
    t.mode = TrainMode::Baseline;
    for (std::string_view k : kMaskKeys) {
      if (cfg.has(k)) throw std::invalid_argument("config: baseline mode forbids " + std::string(k));
    }
    t.init.masked = false;
  } else {
    t.init.mode = parse_mask_mode(mode);
    t.mode = t.init.mode == MaskMode::Signed ? TrainMode::Signed : TrainMode::Binary;
    const bool sym = cfg.has("mask.tau");
    const bool asym = cfg.has("mask.tau_n") || cfg.has("mask.tau_p");
    const bool rate = cfg.has("mask.initial_pruning_rate");
    if (sym + asym + rate > 1) {
      throw std::invalid_argument("config: set exactly one of mask.tau, mask.tau_n/tau_p, mask.initial_pruning_rate");
    }
    if (asym && !(cfg.has("mask.tau_n") && cfg.has("mask.tau_p"))) {
      throw std::invalid_argument("config: mask.tau_n and mask.tau_p must be set together");
    }
    if (rate) {
      t.init.initial_pruning_rate = num("mask.initial_pruning_rate");
    } else if (asym) {
      t.init.tau_n = num("mask.tau_n");
      t.init.tau_p = num("mask.tau_p");
    } else {
      const double tau = sym ? num("mask.tau") : 0.01;
      t.init.tau_n = -tau;
      t.init.tau_p = tau;
    }
    MaskState probe{Tensor(), t.init.tau_n, t.init.tau_p, t.init.mode};
    probe.validate();
    t.init.mask_init = parse_mask_init(cfg.get("mask.init"));
    t.init.mask_init_scale = num("mask.init_scale");
  }

  t.sgd.lr = num("optim.lr");
  t.sgd.momentum = num("optim.momentum");
  t.sgd.weight_decay = num("optim.weight_decay");
  t.sgd.decay_rate = num("optim.decay_rate");
  t.sgd.decay_step = uint("optim.decay_step");
  t.sgd.decay_form = parse_decay_form(cfg.get("optim.decay_form"));
  t.sgd.validate();
  t.epochs = uint("optim.epochs");
  t.batch_size = uint("train.batch_size");
  t.eval_batch = uint("train.eval_batch");
  if (t.batch_size == 0 || t.eval_batch == 0) throw std::invalid_argument("config: batch sizes must be positive");
  t.seed = uint("train.seed");
  t.checked = to_bool("train.checked", cfg.get("train.checked"));
  return t;
}

}  // namespace supermask
