// supermask: train, evaluate, export and analyze signed-Supermask networks.

#include <CLI11.hpp>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "supermask/analysis.hpp"
#include "supermask/config.hpp"
#include "supermask/gradcheck.hpp"
#include "supermask/sparse.hpp"
#include "supermask/trainer.hpp"

namespace fs = std::filesystem;
using namespace supermask;

namespace {

struct ConfigArgs {
  std::string preset;
  std::string config_file;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string data_dir;

  void attach(CLI::App* app, bool with_seed) {
    app->add_option("--preset", preset, "start from a shipped preset (see `supermask presets`)");
    app->add_option("--config", config_file, "key = value config file, applied after the preset")->check(CLI::ExistingFile);
    app->add_option("--override", overrides, "key=value, applied last (repeatable)");
    if (with_seed) app->add_option("--seed", seed, "root seed (train.seed)");
    app->add_option("--data-dir", data_dir, "dataset directory (data.dir)");
  }

  Config resolve() const {
    Config c = preset.empty() ? Config() : Config::preset(preset);
    if (!config_file.empty()) c.merge(Config::load(config_file));
    for (const std::string& o : overrides) c.apply_override(o);
    if (seed) c.set("train.seed", std::to_string(*seed));
    if (!data_dir.empty()) c.set("data.dir", data_dir);
    TrainConfig::from(c);
    return c;
  }
};

// "0,1,2", "0-4" or a mix such as "0-2,7".
std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t comma = text.find(',', start);
    if (comma == std::string::npos) comma = text.size();
    const std::string item = text.substr(start, comma - start);
    const std::size_t dash = item.find('-');
    if (dash == std::string::npos) {
      out.push_back(std::stoull(item));
    } else {
      const std::uint64_t lo = std::stoull(item.substr(0, dash)), hi = std::stoull(item.substr(dash + 1));
      if (hi < lo) throw std::invalid_argument("bad seed range '" + item + "'");
      for (std::uint64_t s = lo; s <= hi; ++s) out.push_back(s);
    }
    start = comma + 1;
  }
  return out;
}

std::vector<fs::path> expand_runs(const std::vector<std::string>& args) {
  std::vector<fs::path> runs;
  for (const std::string& a : args) {
    if (fs::exists(fs::path(a) / "run.info")) {
      runs.emplace_back(a);
      continue;
    }
    std::vector<fs::path> found;
    for (const auto& e : fs::directory_iterator(a)) {
      if (e.is_directory() && fs::exists(e.path() / "run.info")) found.push_back(e.path());
    }
    if (found.empty()) throw std::runtime_error(a + ": no run directories found");
    std::sort(found.begin(), found.end());
    runs.insert(runs.end(), found.begin(), found.end());
  }
  return runs;
}

void print_mask_report(const std::vector<fs::path>& runs, bool equality, bool distribution, const std::string& pgm,
                       const std::string& filter_csv) {
  std::vector<std::vector<TernaryCSR>> masks;
  for (const fs::path& r : runs) masks.push_back(read_tcsr(r / "masks" / "masks.tcsr"));
  const std::size_t layers = masks.front().size();

  if (distribution) {
    std::printf("layer,run,neg,zero,pos,remaining\n");
    for (std::size_t r = 0; r < runs.size(); ++r) {
      for (const TernaryCSR& l : masks[r]) {
        const MaskDistribution d = mask_distribution(reconstruct(l));
        std::printf("%s,%s,%zu,%zu,%zu,%.6f\n", l.name.c_str(), runs[r].filename().c_str(), d.neg, d.zero, d.pos,
                    static_cast<double>(d.neg + d.pos) / static_cast<double>(d.total()));
      }
    }
  }
  if (equality) {
    if (runs.size() < 2) throw std::invalid_argument("equality needs at least two runs");
    std::printf("layer,pairwise_signed,pairwise_absolute,unanimous_signed,unanimous_absolute\n");
    for (std::size_t l = 0; l < layers; ++l) {
      std::vector<Tensor> set;
      for (const auto& m : masks) set.push_back(reconstruct(m.at(l)));
      std::printf("%s,%.6f,%.6f,%.6f,%.6f\n", masks[0][l].name.c_str(), pairwise_mask_equality(set, false),
                  pairwise_mask_equality(set, true), unanimous_mask_equality(set, false),
                  unanimous_mask_equality(set, true));
    }
  }
  if (!pgm.empty() || !filter_csv.empty()) {
    const Tensor first = reconstruct(masks.front().front());
    const FilterMap fm = first_layer_filter_map(first);
    std::printf("first-layer inputs fully masked: %zu of %zu\n", fm.fully_masked, fm.counts.size());
    if (!filter_csv.empty()) {
      std::ofstream out(filter_csv);
      out << "input,count\n";
      for (std::size_t i = 0; i < fm.counts.size(); ++i) out << i << ',' << fm.counts[i] << '\n';
    }
    if (!pgm.empty()) {
      std::size_t side = 1;
      while (side * side < fm.counts.size()) ++side;
      if (side * side != fm.counts.size()) throw std::invalid_argument("first layer is not a square image; use --filter-csv");
      write_pgm(pgm, fm.counts, side, side);
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Signed Supermask training engine"};
  app.require_subcommand(1);

  ConfigArgs train_args;
  std::string train_out;
  auto* train_cmd = app.add_subcommand("train", "train one network");
  train_args.attach(train_cmd, true);
  train_cmd->add_option("--out", train_out, "run directory")->required();

  ConfigArgs camp_args;
  std::string camp_out, seeds_text = "0-4";
  auto* camp_cmd = app.add_subcommand("campaign", "train one network per seed and summarize");
  camp_args.attach(camp_cmd, false);
  camp_cmd->add_option("--seeds", seeds_text, "seed list, e.g. 0-4 or 1,5,9")->capture_default_str();
  camp_cmd->add_option("--out", camp_out, "campaign directory")->required();

  std::string eval_run, eval_data;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a finished run on its test split");
  eval_cmd->add_option("--run", eval_run, "run directory")->required();
  eval_cmd->add_option("--data-dir", eval_data, "dataset directory (overrides the run's data.dir)");

  std::string export_run, export_out;
  auto* export_cmd = app.add_subcommand("export-sparse", "write a run's effective weights as ternary CSR");
  export_cmd->add_option("--run", export_run, "run directory")->required();
  export_cmd->add_option("--out", export_out, ".tcsr output file")->required();

  std::vector<std::string> analyze_runs;
  std::string pgm, filter_csv;
  bool want_equality = false, want_distribution = false;
  auto* analyze_cmd = app.add_subcommand("analyze", "mask equality, distributions and first-layer filter maps");
  analyze_cmd->add_option("runs", analyze_runs, "run directories or campaign directories")->required();
  analyze_cmd->add_flag("--equality", want_equality, "pairwise and unanimous mask equality per layer");
  analyze_cmd->add_flag("--distribution", want_distribution, "per-layer (neg, zero, pos) counts");
  analyze_cmd->add_option("--pgm", pgm, "first-layer filter map of the first run as a PGM image");
  analyze_cmd->add_option("--filter-csv", filter_csv, "first-layer filter map as CSV");

  std::size_t depth = 6, width = 256, trials = 200;
  double p0 = 0.5;
  std::string scheme = "elus", rule = "forward", fan_mode = "fan_in";
  std::uint64_t var_seed = 0;
  auto* var_cmd = app.add_subcommand("check-variance", "Monte Carlo variance propagation through masked ELU stacks");
  var_cmd->add_option("--depth", depth)->capture_default_str();
  var_cmd->add_option("--width", width)->capture_default_str();
  var_cmd->add_option("--p0", p0)->capture_default_str();
  var_cmd->add_option("--trials", trials)->capture_default_str();
  var_cmd->add_option("--scheme", scheme)->capture_default_str();
  var_cmd->add_option("--rule", rule)->capture_default_str();
  var_cmd->add_option("--fan-mode", fan_mode)->capture_default_str();
  var_cmd->add_option("--seed", var_seed)->capture_default_str();

  std::size_t cases = 20;
  std::uint64_t gc_seed = 0;
  double gc_tol = 1e-6;
  auto* gc_cmd = app.add_subcommand("gradcheck", "finite-difference check of backprop on tiny random nets");
  gc_cmd->add_option("--cases", cases)->capture_default_str();
  gc_cmd->add_option("--seed", gc_seed)->capture_default_str();
  gc_cmd->add_option("--tolerance", gc_tol)->capture_default_str();

  ConfigArgs show_args;
  auto* presets_cmd = app.add_subcommand("presets", "list presets, or print a resolved config");
  show_args.attach(presets_cmd, true);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_cmd) {
      const Config cfg = train_args.resolve();
      const DataPair data = load_data(TrainConfig::from(cfg));
      const RunResult r = train(cfg, data, train_out, &std::cerr);
      const EpochMetrics& f = r.final_metrics();
      std::printf("test_acc %.4f  remaining %.4f  compression %.4f\n", f.test_acc, f.remaining_ratio,
                  r.compression_rate);
    } else if (*camp_cmd) {
      const std::vector<std::uint64_t> seeds = parse_seeds(seeds_text);
      const CampaignResult r = campaign(camp_args.resolve(), seeds, camp_out, &std::cerr);
      std::printf("runs %zu\n", r.runs.size());
      std::printf("test_acc        mean %.4f  q05 %.4f  q95 %.4f\n", r.accuracy.mean, r.accuracy.q05, r.accuracy.q95);
      std::printf("remaining_ratio mean %.4f  q05 %.4f  q95 %.4f\n", r.remaining.mean, r.remaining.q05,
                  r.remaining.q95);
      std::printf("compression     mean %.4f  q05 %.4f  q95 %.4f\n", r.compression.mean, r.compression.q05,
                  r.compression.q95);
    } else if (*eval_cmd) {
      Config cfg = load_run_config(eval_run);
      if (!eval_data.empty()) cfg.set("data.dir", eval_data);
      const TrainConfig tc = TrainConfig::from(cfg);
      const Dataset test = load_dataset(tc.dataset, tc.data_dir, Split::Test, tc.test_limit);
      const Network net = load_effective_network(eval_run);
      const EvalResult ev = evaluate(net, test, tc.eval_batch);
      std::printf("test_acc %.6f  test_loss %.6f  samples %zu\n", ev.accuracy, ev.loss, test.size());
    } else if (*export_cmd) {
      const Network net = load_effective_network(export_run);
      std::vector<TernaryCSR> layers;
      std::printf("layer,rows,cols,nnz,dense_bytes,csr_bytes\n");
      for (std::size_t i = 0; i < net.weighted_count(); ++i) {
        const Tensor& w = net.weights(i);
        Tensor mask(w.shape());
        for (std::size_t k = 0; k < w.size(); ++k) mask[k] = w[k] != 0.0 ? 1.0 : 0.0;
        layers.push_back(export_layer(w, mask, net.weighted_name(i)));
        const ByteSizes b = byte_sizes(layers.back());
        std::printf("%s,%u,%u,%zu,%zu,%zu\n", layers.back().name.c_str(), layers.back().rows, layers.back().cols,
                    layers.back().nnz(), b.dense, b.csr);
      }
      write_tcsr(export_out, layers);
      std::printf("compression_rate %.6f\n", compression_rate(layers));
    } else if (*analyze_cmd) {
      const std::vector<fs::path> runs = expand_runs(analyze_runs);
      const bool none = !want_equality && !want_distribution && pgm.empty() && filter_csv.empty();
      print_mask_report(runs, want_equality || (none && runs.size() > 1), want_distribution || none, pgm, filter_csv);
    } else if (*var_cmd) {
      InitSpec spec;
      spec.scheme = parse_init_scheme(scheme);
      spec.distribution = InitDistribution::SignedConstant;
      spec.rule = parse_elus_rule(rule);
      spec.fan_mode = parse_fan_mode(fan_mode);
      SeededRng rng = SeededRng::derive(var_seed, RngStream::Analysis, 0);
      const std::vector<double> v = variance_propagation(depth, width, p0, spec, trials, rng);
      std::printf("layer,var_z,ratio_to_layer1\n");
      for (std::size_t l = 0; l < v.size(); ++l) std::printf("%zu,%.6g,%.6g\n", l + 1, v[l], v[l] / v[0]);
    } else if (*gc_cmd) {
      bool ok = true;
      for (const GradCheckResult& r : gradcheck_suite(gc_seed, cases)) {
        const bool pass = r.max_rel_error <= gc_tol && r.ste_exact;
        ok = ok && pass;
        std::printf("%s  rel_err %.3e  ste %s  %s\n", pass ? "PASS" : "FAIL", r.max_rel_error,
                    r.ste_exact ? "exact" : "MISMATCH", r.description.c_str());
      }
      return ok ? 0 : 1;
    } else if (*presets_cmd) {
      if (show_args.preset.empty() && show_args.config_file.empty() && show_args.overrides.empty()) {
        for (const std::string& p : Config::preset_names()) std::printf("%s\n", p.c_str());
      } else {
        const Config cfg = show_args.resolve();
        std::printf("%s# digest %s\n", cfg.resolved_text().c_str(), digest_hex(cfg.digest()).c_str());
      }
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
