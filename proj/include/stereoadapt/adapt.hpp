#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "stereoadapt/confidence.hpp"
#include "stereoadapt/harness/metrics.hpp"
#include "stereoadapt/harness/runlog.hpp"
#include "stereoadapt/harness/sequence.hpp"
#include "stereoadapt/losses.hpp"
#include "stereoadapt/net/stereo_net.hpp"
#include "stereoadapt/random.hpp"
#include "stereoadapt/tensor/optim.hpp"

// Online adaptation: full back-propagation and modular (one module per
// frame, reward-driven selection) updates on a stream of stereo frames.
namespace stereoadapt::adapt {

enum class Mode { kNone, kFull, kMad, kFullProxy, kMadProxy };
enum class ProxySource { kNone, kSgm, kWild, kFile };

std::string to_string(Mode mode);
std::string to_string(ProxySource source);
Mode parse_mode(const std::string& text);  // none|full|mad|full++|mad++
ProxySource parse_proxy_source(const std::string& text);

bool uses_proxy(Mode mode);
bool is_modular(Mode mode);

struct EngineConfig {
  Mode mode = Mode::kNone;
  ProxySource proxy = ProxySource::kSgm;
  int K = 1;  // adapt on frames with t mod K == 0
  double lr = 1e-4;
  double momentum = 0.9;
  double delta = 0.99;
  double lambda = 0.01;
  double epsilon = 0.95;
  std::uint64_t seed = 0;
  bool timing = false;  // measure per-frame wall time; off keeps run logs reproducible
  confidence::DistillConfig sgm_distill;   // matcher and filter for ProxySource::kSgm
  confidence::DistillConfig wild_distill;  // for ProxySource::kWild
  losses::PhotometricConfig photometric;

  EngineConfig();
  void validate() const;
};

/// Module-selection histogram and loss history. `t` counts histogram
/// updates; the first one bootstraps the history.
struct AdaptState {
  std::vector<double> H;
  double prev_loss_1 = 0.0;
  double prev_loss_2 = 0.0;
  int prev_index = 0;  // 1-based module updated at the previous step, 0 before the first
  long t = 0;
  Rng rng;

  explicit AdaptState(int modules = 0, std::uint64_t seed = 0) : H(static_cast<std::size_t>(modules), 0.0), rng(seed) {}
};

/// Details of one histogram update, for inspection.
struct HistogramStep {
  double expected = 0.0;  // linear extrapolation of the loss
  double gamma = 0.0;     // expected - observed, positive when the update helped
};

/// Draws a 1-based module index from softmax(H).
int sample_module(const std::vector<double>& H, Rng& rng);
std::vector<double> softmax(const std::vector<double>& H);

/// Bootstrap on the first call, extrapolate, decay H, reward the previously
/// updated module, then shift the loss history and remember `phi`.
HistogramStep update_histogram(AdaptState& state, double loss, int phi, double delta, double lambda);

struct StepResult {
  DisparityMap disparity;   // full-resolution prediction from the pre-update parameters
  double loss = 0.0;        // finest-scale loss L1
  double module_loss = 0.0; // loss of the updated module (MAD)
  int phi = 0;              // 1-based module updated, 0 for none
  bool updated = false;
  bool skipped = false;     // empty proxy mask
  double ms = 0.0;
};

struct FrameRecord {
  std::string frame;
  harness::MetricsRecord metrics;
  std::optional<double> loss;
  int phi = 0;
  bool updated = false;
  bool skipped = false;
  double ms = 0.0;
  double proxy_density = -1.0;  // < 0 when no proxy was used
};

struct RunSummary {
  std::string mode;
  int frames = 0;
  int update_steps = 0;
  int skipped_updates = 0;
  std::vector<long> module_updates;
  harness::MetricsSummary metrics;
  double median_step_ms = 0.0;
};

class Engine {
 public:
  Engine(EngineConfig cfg, net::StereoNet<float> net);

  /// Predict, score against gt, and adapt when this frame is due.
  FrameRecord process(const StereoFrame& frame);

  StepResult step_full(const StereoFrame& frame, const ProxyLabels* proxy);
  StepResult step_mad(const StereoFrame& frame, const ProxyLabels* proxy);

  /// Proxy labels the configured source yields for `frame`.
  std::optional<ProxyLabels> proxy_for(const StereoFrame& frame) const;

  const EngineConfig& config() const { return cfg_; }
  const net::StereoNet<float>& network() const { return net_; }
  net::StereoNet<float>& network() { return net_; }
  const AdaptState& state() const { return state_; }
  AdaptState& state() { return state_; }
  const std::vector<long>& module_updates() const { return module_updates_; }
  int update_steps() const { return update_steps_; }
  int skipped_updates() const { return skipped_; }
  long frames_seen() const { return frame_index_; }

 private:
  tensor::Var<float> supervision_loss(tensor::Var<float> full_res_disp, tensor::Var<float> left,
                                      tensor::Var<float> right, const ProxyLabels* proxy) const;

  EngineConfig cfg_;
  net::StereoNet<float> net_;
  AdaptState state_;
  tensor::SgdMomentum<float> optimizer_;
  std::vector<long> module_updates_;
  int update_steps_ = 0;
  int skipped_ = 0;
  long frame_index_ = 0;
};

using RecordSink = std::function<void(const FrameRecord&)>;

struct RunResult {
  std::vector<FrameRecord> records;
  RunSummary summary;
};

/// Drives `engine` over `source`. Frames must share one extent; a change
/// aborts with kExtentMismatch naming the frame.
RunResult run_sequence(Engine& engine, harness::FrameSource& source, const RecordSink& sink = {});

RunSummary summarize_run(const Engine& engine, const std::vector<FrameRecord>& records);

/// CSV row for a record; `ms` is left empty unless `timing` is set.
harness::RunLogRow to_run_log_row(const FrameRecord& record, bool timing);

/// JSON summary written next to the run log.
std::string summary_json(const RunSummary& summary);

}  // namespace stereoadapt::adapt
