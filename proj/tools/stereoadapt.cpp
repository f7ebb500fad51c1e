// Command-line front end: synthetic data, pretraining, proxy distillation,
// online adaptation runs, evaluation and plotting.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "stereoadapt/adapt.hpp"
#include "stereoadapt/confidence.hpp"
#include "stereoadapt/error.hpp"
#include "stereoadapt/harness/config.hpp"
#include "stereoadapt/harness/runlog.hpp"
#include "stereoadapt/harness/sequence.hpp"
#include "stereoadapt/harness/synthetic.hpp"
#include "stereoadapt/net/stereo_net.hpp"
#include "stereoadapt/pretrain.hpp"

namespace fs = std::filesystem;
using namespace stereoadapt;

namespace {

// Parses "HxW" (or empty for no crop).
harness::CropSpec parse_crop(const std::string& text) {
  harness::CropSpec crop;
  if (text.empty()) return crop;
  const auto x = text.find('x');
  try {
    if (x == std::string::npos) throw std::invalid_argument(text);
    crop.height = std::stoi(text.substr(0, x));
    crop.width = std::stoi(text.substr(x + 1));
  } catch (const std::exception&) {
    throw Error(ErrorCode::kInvalidArgument, "crop must look like HxW, got '" + text + "'");
  }
  if (crop.height < 1 || crop.width < 1) throw Error(ErrorCode::kInvalidArgument, "crop extents must be positive");
  return crop;
}

net::WidthScale parse_width(const std::string& text) {
  net::WidthScale w;
  const auto slash = text.find('/');
  try {
    if (slash == std::string::npos) {
      w.num = std::stoi(text);
    } else {
      w.num = std::stoi(text.substr(0, slash));
      w.den = std::stoi(text.substr(slash + 1));
    }
  } catch (const std::exception&) {
    throw Error(ErrorCode::kInvalidArgument, "width must look like N or N/D, got '" + text + "'");
  }
  if (w.num < 1 || w.den < 1) throw Error(ErrorCode::kInvalidArgument, "width scale must be positive");
  return w;
}

std::string width_text(const net::WidthScale& w) { return std::to_string(w.num) + "/" + std::to_string(w.den); }

std::string num(double v) {
  std::ostringstream s;
  s << v;
  return s.str();
}

// Hands out a frame already pulled from `inner` before continuing with the rest.
class PeekedSource : public harness::FrameSource {
 public:
  PeekedSource(std::unique_ptr<harness::FrameSource> inner, int limit) : inner_(std::move(inner)), limit_(limit) {
    first_ = inner_->next();
  }
  const std::optional<StereoFrame>& first() const { return first_; }
  std::optional<StereoFrame> next() override {
    if (limit_ >= 0 && served_ >= limit_) return std::nullopt;
    ++served_;
    if (first_) {
      auto f = std::move(first_);
      first_.reset();
      return f;
    }
    return inner_->next();
  }

 private:
  std::unique_ptr<harness::FrameSource> inner_;
  std::optional<StereoFrame> first_;
  int limit_;
  int served_ = 0;
};

struct SequenceOptions {
  std::string path;
  std::uint64_t seed = 0;
  std::string crop;
  int frames = -1;

  void add_to(CLI::App* cmd) {
    cmd->add_option("sequence", path, "Sequence directory or synthetic spec file")->required();
    cmd->add_option("--seq-seed", seed, "Seed for synthetic specs without a seed key");
    cmd->add_option("--crop", crop, "Central crop HxW applied to every frame");
    cmd->add_option("--frames", frames, "Use only the first N frames");
  }
  std::unique_ptr<PeekedSource> open() const {
    auto source = std::make_unique<PeekedSource>(harness::open_sequence(path, seed, parse_crop(crop)), frames);
    if (!source->first()) throw Error(ErrorCode::kInvalidArgument, "sequence " + path + " has no frames");
    return source;
  }
  void describe(harness::RunLog& log) const {
    log.settings.emplace_back("sequence", path);
    log.settings.emplace_back("seq_seed", std::to_string(seed));
    log.settings.emplace_back("crop", crop.empty() ? "none" : crop);
    log.settings.emplace_back("frames", frames < 0 ? "all" : std::to_string(frames));
  }
};

struct NetOptions {
  std::string checkpoint;
  std::string width = "1/4";
  int levels = 6;
  std::uint64_t seed = 0;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--checkpoint-in", checkpoint, "Start from these weights");
    cmd->add_option("--width", width, "Channel scale N/D for a fresh network");
    cmd->add_option("--levels", levels, "Encoder blocks of a fresh network");
    cmd->add_option("--net-seed", seed, "Initialisation seed of a fresh network");
  }
  net::StereoNet<float> make(int channels) const {
    if (!checkpoint.empty()) return net::load_checkpoint(checkpoint);
    net::NetConfig cfg;
    cfg.width_scale = parse_width(width);
    cfg.levels = levels;
    cfg.in_channels = channels;
    return net::build_network<float>(cfg, seed);
  }
  void describe(harness::RunLog& log) const {
    if (!checkpoint.empty()) {
      log.settings.emplace_back("checkpoint_in", checkpoint);
    } else {
      log.settings.emplace_back("net_width", width);
      log.settings.emplace_back("net_levels", std::to_string(levels));
      log.settings.emplace_back("net_seed", std::to_string(seed));
    }
  }
};

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoFailure, "cannot open " + path + " for writing");
  out << text;
  if (!out) throw Error(ErrorCode::kIoFailure, "write failed for " + path);
}

std::string default_summary_path(const std::string& log_path) {
  fs::path p(log_path);
  p.replace_extension(".summary.json");
  return p.string();
}

// gen-synthetic

struct GenSynthetic {
  std::string spec_path, out;
  std::uint64_t seed = 0;
  std::vector<std::string> overrides;

  void run() const {
    auto cfg = harness::Config::load(spec_path);
    for (const auto& o : overrides) cfg.apply_override(o);
    const auto spec = harness::synthetic_spec_from_config(cfg);
    const auto s = static_cast<std::uint64_t>(cfg.get_int64("seed", static_cast<long long>(seed)));
    std::vector<StereoFrame> frames;
    for (int i = 0; i < spec.total_frames(); ++i) frames.push_back(harness::render_synthetic_frame(spec, s, i));
    harness::write_sequence_dir(out, frames);
    auto echo = harness::synthetic_spec_to_config(spec);
    echo.set("seed", std::to_string(s));
    echo.save((fs::path(out) / "spec.cfg").string());
    std::cout << "wrote " << frames.size() << " frames to " << out << "\n";
  }
};

// pretrain

struct Pretrain {
  std::string config_path;
  std::vector<std::string> overrides;

  void run() const {
    auto cfg = harness::Config::load(config_path);
    for (const auto& o : overrides) cfg.apply_override(o);
    const std::string sequence = cfg.get_string("sequence", "");
    const std::string out = cfg.get_string("out", "");
    if (sequence.empty() || out.empty()) {
      throw Error(ErrorCode::kInvalidArgument, "pretrain config needs 'sequence' and 'out'");
    }
    adapt::PretrainConfig pc;
    pc.steps = cfg.get_int("steps", pc.steps);
    pc.lr = cfg.get_double("lr", pc.lr);
    pc.seed = static_cast<std::uint64_t>(cfg.get_int64("seed", 0));

    const auto crop = parse_crop(cfg.get_string("crop", ""));
    const auto seq_seed = static_cast<std::uint64_t>(cfg.get_int64("seq_seed", 0));
    std::vector<StereoFrame> frames;
    std::function<StereoFrame(std::size_t)> frame_at;
    std::size_t count = 0;
    const int limit = cfg.get_int("frames", -1);
    if (!fs::is_directory(sequence)) {
      // Synthetic specs render on demand so large training sets stay out of memory.
      auto scfg = harness::Config::load(sequence);
      const auto spec = harness::synthetic_spec_from_config(scfg);
      const auto s = static_cast<std::uint64_t>(scfg.get_int64("seed", static_cast<long long>(seq_seed)));
      count = static_cast<std::size_t>(limit >= 0 ? std::min(limit, spec.total_frames()) : spec.total_frames());
      frame_at = [spec, s, crop](std::size_t i) {
        auto f = harness::render_synthetic_frame(spec, s, static_cast<int>(i));
        if (crop.height > 0) f = harness::central_crop(f, crop.height, crop.width);
        return f;
      };
    } else {
      harness::DirectorySource source(sequence, crop);
      while (auto f = source.next()) {
        if (limit >= 0 && static_cast<int>(frames.size()) >= limit) break;
        frames.push_back(std::move(*f));
      }
      count = frames.size();
      frame_at = [&frames](std::size_t i) { return frames[i]; };
    }
    if (count == 0) throw Error(ErrorCode::kInvalidArgument, "no pretraining frames in " + sequence);

    net::NetConfig nc;
    nc.width_scale = parse_width(cfg.get_string("width", "1/4"));
    nc.levels = cfg.get_int("levels", nc.levels);
    nc.in_channels = frame_at(0).left.channels();
    auto network = net::build_network<float>(nc, static_cast<std::uint64_t>(cfg.get_int64("net_seed", 0)));

    std::cout << cfg.to_string();
    const int report = std::max(1, cfg.get_int("report_every", 100));
    double acc = 0.0;
    const auto history = adapt::pretrain(network, count, frame_at, pc, [&](int step, double loss) {
      acc += loss;
      if ((step + 1) % report == 0) {
        std::printf("step %d loss %.6f\n", step + 1, acc / report);
        std::fflush(stdout);
        acc = 0.0;
      }
    });
    net::save_checkpoint(out, network);
    const std::string log = cfg.get_string("loss_log", "");
    if (!log.empty()) {
      std::ostringstream s;
      s << "step,loss\n";
      for (std::size_t i = 0; i < history.size(); ++i) s << i << ',' << history[i] << '\n';
      write_text(log, s.str());
    }
    std::cout << "saved " << out << "\n";
  }
};

// distill

struct Distill {
  SequenceOptions seq;
  std::string matcher = "sgm", filter = "lr", out;
  double eps = 0.95;
  int max_disp = 64;
  double lr_threshold = 1.0;

  void run() const {
    confidence::DistillConfig dc;
    dc.matcher = confidence::parse_matcher(matcher);
    dc.filter.mode = confidence::parse_filter_mode(filter);
    dc.filter.epsilon = eps;
    dc.filter.lr_threshold = lr_threshold;
    dc.sgm.max_disparity = max_disp;
    dc.bm.max_disparity = max_disp;
    dc.sgm.subpixel = dc.bm.subpixel = true;
    if (!out.empty()) fs::create_directories(out);

    auto source = seq.open();
    std::ostringstream csv;
    csv << "frame,raw_density,density,raw_d1,raw_epe,filtered_d1,filtered_epe\n";
    double density = 0.0, raw_d1 = 0.0, filt_d1 = 0.0, raw_epe = 0.0, filt_epe = 0.0;
    int n = 0, with_gt = 0;
    while (auto f = source->next()) {
      const auto res = confidence::distill(*f, dc);
      const auto& r = res.report;
      if (!out.empty()) confidence::write_sparse_labels((fs::path(out) / (f->id + ".sparse")).string(), res.labels);
      csv << f->id << ',' << r.raw_density << ',' << r.density;
      if (r.has_gt) {
        csv << ',' << r.raw_d1 << ',' << r.raw_epe << ',' << r.filtered_d1 << ',' << r.filtered_epe << '\n';
        raw_d1 += r.raw_d1;
        raw_epe += r.raw_epe;
        filt_d1 += r.filtered_d1;
        filt_epe += r.filtered_epe;
        ++with_gt;
      } else {
        csv << ",,,,\n";
      }
      density += r.density;
      ++n;
    }
    nlohmann::ordered_json j;
    j["matcher"] = matcher;
    j["filter"] = filter;
    j["epsilon"] = eps;
    j["max_disparity"] = max_disp;
    j["frames"] = n;
    j["mean_density_percent"] = 100.0 * density / n;
    if (with_gt > 0) {
      j["raw_d1_all"] = raw_d1 / with_gt;
      j["raw_epe"] = raw_epe / with_gt;
      j["filtered_d1_all"] = filt_d1 / with_gt;
      j["filtered_epe"] = filt_epe / with_gt;
    }
    if (!out.empty()) {
      write_text((fs::path(out) / "report.csv").string(), csv.str());
      write_text((fs::path(out) / "report.json").string(), j.dump(2) + "\n");
    }
    std::cout << j.dump(2) << "\n";
  }
};

// adapt / eval

struct Adapt {
  SequenceOptions seq;
  NetOptions netopt;
  std::string mode = "mad++", proxy = "sgm", log_path = "run.csv", summary_path, checkpoint_out;
  int K = 1;
  std::uint64_t seed = 0;
  double lr = 1e-4, momentum = 0.9, delta = 0.99, lambda = 0.01, eps = 0.95;
  int proxy_max_disp = 64;
  bool timing = false;
  bool quiet = false;

  void add_to(CLI::App* cmd, bool evaluation) {
    seq.add_to(cmd);
    netopt.add_to(cmd);
    cmd->add_option("--log", log_path, "Run-log CSV path");
    cmd->add_option("--summary", summary_path, "Summary JSON path (default: next to the log)");
    cmd->add_flag("--quiet", quiet, "Do not print per-frame lines");
    if (evaluation) return;
    cmd->add_option("--mode", mode, "none|full|mad|full++|mad++");
    cmd->add_option("--proxy", proxy, "sgm|wild|file|none");
    cmd->add_option("--K", K, "Adapt every K frames");
    cmd->add_option("--seed", seed, "Module-sampling seed");
    cmd->add_option("--lr", lr, "Learning rate");
    cmd->add_option("--momentum", momentum, "Momentum");
    cmd->add_option("--delta", delta, "Histogram decay");
    cmd->add_option("--lambda", lambda, "Histogram reward scale");
    cmd->add_option("--eps", eps, "Proxy confidence threshold");
    cmd->add_option("--proxy-max-disp", proxy_max_disp, "Disparity range of the proxy matcher");
    cmd->add_option("--checkpoint-out", checkpoint_out, "Save the adapted weights here");
    cmd->add_flag("--timing", timing, "Record per-frame wall time (makes the log non-reproducible)");
  }

  void run() const {
    adapt::EngineConfig ec;
    ec.mode = adapt::parse_mode(mode);
    ec.proxy = adapt::parse_proxy_source(proxy);
    ec.K = K;
    ec.seed = seed;
    ec.lr = lr;
    ec.momentum = momentum;
    ec.delta = delta;
    ec.lambda = lambda;
    ec.epsilon = eps;
    ec.timing = timing;
    ec.sgm_distill.sgm.max_disparity = proxy_max_disp;
    ec.sgm_distill.sgm.subpixel = true;
    ec.wild_distill.bm.max_disparity = proxy_max_disp;
    ec.wild_distill.bm.subpixel = true;
    ec.validate();

    auto source = seq.open();
    adapt::Engine engine(ec, netopt.make(source->first()->left.channels()));

    harness::RunLog log;
    seq.describe(log);
    netopt.describe(log);
    log.settings.emplace_back("mode", adapt::to_string(ec.mode));
    log.settings.emplace_back("proxy", adapt::to_string(ec.proxy));
    log.settings.emplace_back("K", std::to_string(ec.K));
    log.settings.emplace_back("seed", std::to_string(ec.seed));
    log.settings.emplace_back("lr", num(ec.lr));
    log.settings.emplace_back("momentum", num(ec.momentum));
    log.settings.emplace_back("delta", num(ec.delta));
    log.settings.emplace_back("lambda", num(ec.lambda));
    log.settings.emplace_back("epsilon", num(ec.epsilon));
    log.settings.emplace_back("proxy_max_disp", std::to_string(proxy_max_disp));
    log.settings.emplace_back("timing", timing ? "true" : "false");
    log.settings.emplace_back("net", width_text(engine.network().config().width_scale) + " levels " +
                                          std::to_string(engine.network().config().levels));
    if (!quiet) {
      for (const auto& [k, v] : log.settings) std::cout << "# " << k << " = " << v << "\n";
    }

    const auto result = adapt::run_sequence(engine, *source, [&](const adapt::FrameRecord& r) {
      log.rows.push_back(adapt::to_run_log_row(r, timing));
      if (quiet) return;
      std::printf("%s d1 %.3f epe %.4f photo %.5f", r.frame.c_str(), r.metrics.d1_all, r.metrics.epe,
                  r.metrics.photo_err);
      if (r.loss) std::printf(" loss %.5f", *r.loss);
      if (r.phi > 0) std::printf(" phi %d", r.phi);
      if (r.skipped) std::printf(" skipped");
      std::printf("\n");
      std::fflush(stdout);
    });

    harness::write_run_log(log_path, log);
    adapt::RunSummary summary = result.summary;
    if (!timing) summary.median_step_ms = 0.0;
    std::string json = adapt::summary_json(summary);
    if (timing) {
      auto j = nlohmann::ordered_json::parse(json);
      j["median_step_ms"] = summary.median_step_ms;
      json = j.dump(2) + "\n";
    }
    write_text(summary_path.empty() ? default_summary_path(log_path) : summary_path, json);
    if (!checkpoint_out.empty()) net::save_checkpoint(checkpoint_out, engine.network());
    std::cout << json;
  }
};

// plot

struct Plot {
  std::vector<std::string> logs;
  std::string column = "d1_all", out = "plot.svg", title;
  int window = 10;

  void run() const {
    std::vector<std::pair<std::string, harness::RunLog>> loaded;
    for (const auto& path : logs) loaded.emplace_back(fs::path(path).stem().string(), harness::read_run_log(path));
    const auto series = harness::series_from_logs(loaded, column, window);
    harness::write_svg(out, harness::render_svg(series, title.empty() ? column + " per frame" : title, column));
    std::cout << "wrote " << out << "\n";
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Online stereo adaptation toolkit"};
  app.require_subcommand(1);

  GenSynthetic gen;
  auto* gen_cmd = app.add_subcommand("gen-synthetic", "Render a synthetic sequence to a directory");
  gen_cmd->add_option("spec", gen.spec_path, "Synthetic spec file (key = value)")->required();
  gen_cmd->add_option("out", gen.out, "Output directory")->required();
  gen_cmd->add_option("--seed", gen.seed, "Seed when the spec has none");
  gen_cmd->add_option("--set", gen.overrides, "Override a spec key (key=value)");

  Pretrain pre;
  auto* pre_cmd = app.add_subcommand("pretrain", "Supervised multi-scale pretraining");
  pre_cmd->add_option("config", pre.config_path, "Pretraining config (key = value)")->required();
  pre_cmd->add_option("--set", pre.overrides, "Override a config key (key=value)");

  Distill dist;
  auto* dist_cmd = app.add_subcommand("distill", "Proxy labels from a classical matcher plus a confidence filter");
  dist.seq.add_to(dist_cmd);
  dist_cmd->add_option("--matcher", dist.matcher, "sgm|bm");
  dist_cmd->add_option("--filter", dist.filter, "lr|wild|none");
  dist_cmd->add_option("--eps", dist.eps, "Confidence threshold");
  dist_cmd->add_option("--lr-threshold", dist.lr_threshold, "Left-right check tolerance in pixels");
  dist_cmd->add_option("--max-disp", dist.max_disp, "Disparity search range");
  dist_cmd->add_option("--out", dist.out, "Directory for sparse label files and the report");

  Adapt ad;
  auto* ad_cmd = app.add_subcommand("adapt", "Run online adaptation over a sequence");
  ad.add_to(ad_cmd, false);

  Adapt ev;
  ev.mode = "none";
  ev.proxy = "none";
  ev.log_path = "eval.csv";
  std::string eval_checkpoint;
  auto* ev_cmd = app.add_subcommand("eval", "Evaluate a checkpoint without adaptation");
  ev.add_to(ev_cmd, true);
  ev_cmd->add_option("checkpoint", eval_checkpoint, "Weights to evaluate")->required();

  Plot plot;
  auto* plot_cmd = app.add_subcommand("plot", "Per-frame error curves from run logs as SVG");
  plot_cmd->add_option("logs", plot.logs, "Run-log CSV files")->required();
  plot_cmd->add_option("--column", plot.column, "d1_all|epe|photo_err|loss");
  plot_cmd->add_option("--window", plot.window, "Trailing moving-average window");
  plot_cmd->add_option("--title", plot.title, "Plot title");
  plot_cmd->add_option("--out", plot.out, "SVG path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen_cmd) gen.run();
    if (*pre_cmd) pre.run();
    if (*dist_cmd) dist.run();
    if (*ad_cmd) ad.run();
    if (*ev_cmd) {
      ev.netopt.checkpoint = eval_checkpoint;
      ev.run();
    }
    if (*plot_cmd) plot.run();
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
