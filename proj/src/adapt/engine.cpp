#include <algorithm>
#include <chrono>
#include <cmath>

#include "stereoadapt/adapt.hpp"
#include "stereoadapt/error.hpp"
#include "json.hpp"

namespace stereoadapt::adapt {

namespace ops = tensor;
using tensor::Tape;
using tensor::Var;

namespace {

// A diverged network must stop the run rather than poison the histogram.
void require_finite(double loss, const StereoFrame& frame) {
  if (!std::isfinite(loss)) throw Error(ErrorCode::kNonFinite, "adaptation loss on frame " + frame.id);
}

}  // namespace

std::string to_string(Mode mode) {
  switch (mode) {
    case Mode::kNone: return "none";
    case Mode::kFull: return "full";
    case Mode::kMad: return "mad";
    case Mode::kFullProxy: return "full++";
    case Mode::kMadProxy: return "mad++";
  }
  return "?";
}

std::string to_string(ProxySource source) {
  switch (source) {
    case ProxySource::kNone: return "none";
    case ProxySource::kSgm: return "sgm";
    case ProxySource::kWild: return "wild";
    case ProxySource::kFile: return "file";
  }
  return "?";
}

Mode parse_mode(const std::string& text) {
  if (text == "none") return Mode::kNone;
  if (text == "full") return Mode::kFull;
  if (text == "mad") return Mode::kMad;
  if (text == "full++") return Mode::kFullProxy;
  if (text == "mad++") return Mode::kMadProxy;
  throw Error(ErrorCode::kInvalidArgument, "unknown adaptation mode '" + text + "'");
}

ProxySource parse_proxy_source(const std::string& text) {
  if (text == "none") return ProxySource::kNone;
  if (text == "sgm") return ProxySource::kSgm;
  if (text == "wild") return ProxySource::kWild;
  if (text == "file" || text == "sparse-file") return ProxySource::kFile;
  throw Error(ErrorCode::kInvalidArgument, "unknown proxy source '" + text + "'");
}

bool uses_proxy(Mode mode) { return mode == Mode::kFullProxy || mode == Mode::kMadProxy; }
bool is_modular(Mode mode) { return mode == Mode::kMad || mode == Mode::kMadProxy; }

EngineConfig::EngineConfig() {
  sgm_distill.matcher = confidence::Matcher::kSgm;
  sgm_distill.filter.mode = confidence::FilterMode::kLrCheck;
  wild_distill.matcher = confidence::Matcher::kBm;
  wild_distill.filter.mode = confidence::FilterMode::kWild;
}

void EngineConfig::validate() const {
  if (K < 1) throw Error(ErrorCode::kInvalidArgument, "K must be >= 1");
  if (!(delta > 0.0 && delta <= 1.0)) throw Error(ErrorCode::kInvalidArgument, "delta must be in (0, 1]");
  if (!(lambda >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "lambda must be >= 0");
  if (!(lr >= 0.0) || !(momentum >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "lr and momentum must be >= 0");
  if (uses_proxy(mode) && proxy == ProxySource::kNone) {
    throw Error(ErrorCode::kInvalidArgument, "mode " + to_string(mode) + " needs a proxy source");
  }
}

std::vector<double> softmax(const std::vector<double>& H) {
  if (H.empty()) throw Error(ErrorCode::kInvalidArgument, "softmax of an empty histogram");
  const double top = *std::max_element(H.begin(), H.end());
  std::vector<double> p(H.size());
  double z = 0.0;
  for (std::size_t i = 0; i < H.size(); ++i) z += (p[i] = std::exp(H[i] - top));
  for (double& v : p) v /= z;
  return p;
}

int sample_module(const std::vector<double>& H, Rng& rng) {
  const std::vector<double> p = softmax(H);
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    acc += p[i];
    if (u < acc) return static_cast<int>(i) + 1;
  }
  return static_cast<int>(p.size());  // u landed in rounding slack at the top
}

HistogramStep update_histogram(AdaptState& s, double loss, int phi, double delta, double lambda) {
  if (s.t == 0) s.prev_loss_2 = s.prev_loss_1 = loss;
  HistogramStep step;
  step.expected = 2.0 * s.prev_loss_1 - s.prev_loss_2;
  step.gamma = step.expected - loss;
  for (double& h : s.H) h *= delta;
  if (s.prev_index >= 1 && s.prev_index <= static_cast<int>(s.H.size())) s.H[s.prev_index - 1] += lambda * step.gamma;
  s.prev_loss_2 = s.prev_loss_1;
  s.prev_loss_1 = loss;
  s.prev_index = phi;
  ++s.t;
  return step;
}

Engine::Engine(EngineConfig cfg, net::StereoNet<float> net)
    : cfg_(std::move(cfg)),
      net_(std::move(net)),
      state_(net_.partition.size(), cfg_.seed),
      optimizer_(static_cast<float>(cfg_.lr), static_cast<float>(cfg_.momentum)),
      module_updates_(static_cast<std::size_t>(net_.partition.size()), 0) {
  cfg_.validate();
}

std::optional<ProxyLabels> Engine::proxy_for(const StereoFrame& frame) const {
  switch (cfg_.proxy) {
    case ProxySource::kNone: return std::nullopt;
    case ProxySource::kFile:
      if (!frame.proxy) throw Error(ErrorCode::kInvalidArgument, "frame " + frame.id + " carries no proxy labels");
      return frame.proxy;
    case ProxySource::kSgm: {
      auto d = cfg_.sgm_distill;
      d.filter.epsilon = cfg_.epsilon;
      return confidence::distill(frame, d).labels;
    }
    case ProxySource::kWild: {
      auto d = cfg_.wild_distill;
      d.filter.epsilon = cfg_.epsilon;
      return confidence::distill(frame, d).labels;
    }
  }
  return std::nullopt;
}

Var<float> Engine::supervision_loss(Var<float> disp, Var<float> left, Var<float> right,
                                    const ProxyLabels* proxy) const {
  if (proxy) return losses::proxy_loss(disp, *proxy);
  return losses::photometric_loss(left, right, disp, cfg_.photometric);
}

StepResult Engine::step_full(const StereoFrame& frame, const ProxyLabels* proxy) {
  const auto start = std::chrono::steady_clock::now();
  Tape<float> tape;
  Var<float> left = tape.constant(frame.left), right = tape.constant(frame.right);
  const net::PyramidVars<float> pyr = net::forward(tape, net_, frame.left, frame.right, net::Routes::kFull);
  StepResult res;
  res.disparity = pyr.full.value();
  if (proxy && proxy->empty()) {
    res.skipped = true;
    return res;
  }
  Var<float> loss = supervision_loss(pyr.full, left, right, proxy);
  res.loss = res.module_loss = loss.value().item();
  require_finite(res.loss, frame);
  optimizer_.step(net_.params, tensor::backward(loss, net_.partition.all()));
  res.updated = true;
  res.ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return res;
}

StepResult Engine::step_mad(const StereoFrame& frame, const ProxyLabels* proxy) {
  const auto start = std::chrono::steady_clock::now();
  Tape<float> tape;
  Var<float> left = tape.constant(frame.left), right = tape.constant(frame.right);
  const net::PyramidVars<float> pyr = net::forward(tape, net_, frame.left, frame.right, net::Routes::kModular);
  StepResult res;
  res.disparity = pyr.full.value();
  if (proxy && proxy->empty()) {
    res.skipped = true;
    return res;
  }
  Var<float> finest = supervision_loss(pyr.full, left, right, proxy);
  res.loss = finest.value().item();

  const int phi = sample_module(state_.H, state_.rng);
  Var<float> module_loss = finest;
  if (phi > 1) {
    const std::size_t s = static_cast<std::size_t>(phi - 1);
    Var<float> up = ops::upsample_bilinear(pyr.scales[s], pyr.factors[s], true);
    module_loss = supervision_loss(up, left, right, proxy);
  }
  res.module_loss = module_loss.value().item();
  require_finite(res.loss, frame);
  require_finite(res.module_loss, frame);
  optimizer_.step(net_.params, tensor::backward(module_loss, net_.partition.modules[static_cast<std::size_t>(phi - 1)]));
  update_histogram(state_, res.loss, phi, cfg_.delta, cfg_.lambda);
  res.phi = phi;
  res.updated = true;
  res.ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return res;
}

FrameRecord Engine::process(const StereoFrame& frame) {
  FrameRecord rec;
  rec.frame = frame.id;
  DisparityMap disp;
  const bool due = cfg_.mode != Mode::kNone && frame_index_ % cfg_.K == 0;
  if (due) {
    std::optional<ProxyLabels> proxy;
    if (uses_proxy(cfg_.mode)) {
      proxy = proxy_for(frame);
      rec.proxy_density = proxy->density();
    }
    const ProxyLabels* p = proxy ? &*proxy : nullptr;
    StepResult step = is_modular(cfg_.mode) ? step_mad(frame, p) : step_full(frame, p);
    disp = std::move(step.disparity);
    rec.ms = step.ms;
    if (step.skipped) {
      rec.skipped = true;
      ++skipped_;
    } else {
      rec.loss = step.loss;
      rec.phi = step.phi;
      rec.updated = true;
      ++update_steps_;
      if (step.phi > 0) ++module_updates_[static_cast<std::size_t>(step.phi - 1)];
    }
  } else {
    disp = net::predict(net_, frame.left, frame.right).full;
  }
  if (frame.gt) rec.metrics = harness::metrics(disp, *frame.gt);
  rec.metrics.photo_err = harness::photometric_error_metric(frame, disp);
  ++frame_index_;
  return rec;
}

RunSummary summarize_run(const Engine& engine, const std::vector<FrameRecord>& records) {
  RunSummary s;
  s.mode = to_string(engine.config().mode);
  s.frames = static_cast<int>(records.size());
  std::vector<harness::MetricsRecord> metrics;
  std::vector<double> times;
  for (const auto& r : records) {
    metrics.push_back(r.metrics);
    if (r.updated) {
      ++s.update_steps;
      times.push_back(r.ms);
    }
    if (r.skipped) ++s.skipped_updates;
  }
  s.module_updates = engine.module_updates();
  s.metrics = harness::summarize(metrics);
  if (!times.empty()) {
    std::sort(times.begin(), times.end());
    const std::size_t n = times.size();
    s.median_step_ms = n % 2 ? times[n / 2] : 0.5 * (times[n / 2 - 1] + times[n / 2]);
  }
  return s;
}

harness::RunLogRow to_run_log_row(const FrameRecord& r, bool timing) {
  harness::RunLogRow row;
  row.frame = r.frame;
  if (r.metrics.defined) {
    row.d1_all = r.metrics.d1_all;
    row.epe = r.metrics.epe;
  }
  row.photo_err = r.metrics.photo_err;
  row.loss = r.loss;
  row.phi = r.phi;
  if (timing && (r.updated || r.skipped)) row.ms = r.ms;
  return row;
}

std::string summary_json(const RunSummary& s) {
  nlohmann::ordered_json j;
  j["mode"] = s.mode;
  j["frames"] = s.frames;
  j["update_steps"] = s.update_steps;
  j["skipped_updates"] = s.skipped_updates;
  j["module_updates"] = s.module_updates;
  j["evaluated_frames"] = s.metrics.frames;
  j["undefined_frames"] = s.metrics.undefined;
  j["mean_d1_all"] = s.metrics.d1_all;
  j["mean_epe"] = s.metrics.epe;
  j["mean_photo_err"] = s.metrics.photo_err;
  return j.dump(2) + "\n";
}

RunResult run_sequence(Engine& engine, harness::FrameSource& source, const RecordSink& sink) {
  RunResult out;
  std::optional<std::pair<int, int>> extent;
  while (auto frame = source.next()) {
    const std::pair<int, int> hw{frame->height(), frame->width()};
    if (extent && *extent != hw) {
      throw Error(ErrorCode::kExtentMismatch, "frame " + frame->id + " changes resolution to " +
                                                  std::to_string(hw.second) + "x" + std::to_string(hw.first));
    }
    extent = hw;
    FrameRecord rec = engine.process(*frame);
    if (sink) sink(rec);
    out.records.push_back(std::move(rec));
  }
  out.summary = summarize_run(engine, out.records);
  return out;
}

}  // namespace stereoadapt::adapt
