// Acceptance run: evaluates each release criterion end to end and prints one
// PASS/FAIL line per criterion. Exit status is 0 once every criterion has been
// evaluated; pass --strict to make any FAIL return 1. `--report FILE` also
// writes the lines to FILE. Criterion numbers given as arguments restrict the
// run to those criteria.

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "stereoadapt/adapt.hpp"
#include "stereoadapt/classic/stereo.hpp"
#include "stereoadapt/confidence.hpp"
#include "stereoadapt/harness/config.hpp"
#include "stereoadapt/harness/metrics.hpp"
#include "stereoadapt/harness/synthetic.hpp"
#include "stereoadapt/losses.hpp"
#include "stereoadapt/pretrain.hpp"
#include "support.hpp"

#ifndef STEREOADAPT_CLI_PATH
#error "STEREOADAPT_CLI_PATH must name the stereoadapt executable"
#endif

namespace stereoadapt {
namespace {

using testing::away_from_zero;
using testing::GraphFn;
using testing::random_tensor;
using tensor::Shape;
using tensor::Tape;
using tensor::Tensor;
using tensor::Var;
namespace ops = tensor;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[1024];
  va_list args;
  va_start(args, f);
  std::vsnprintf(buf, sizeof buf, f, args);
  va_end(args);
  return buf;
}

void progress(const std::string& line) {
  std::fprintf(stderr, "  .. %s\n", line.c_str());
  std::fflush(stderr);
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// ---------------------------------------------------------------------------
// 1. Gradients against central differences in f64.

Verdict gradient_integrity() {
  Rng rng(101);
  const double tol = 1e-4;
  std::vector<std::string> failures;
  double worst = 0.0;
  std::size_t elements = 0;
  int op_checks = 0;

  auto check = [&](const std::string& name, const GraphFn& f, std::vector<Tensor<double>> in) {
    const auto r = testing::grad_check(f, std::move(in), 7 + static_cast<std::uint64_t>(op_checks));
    ++op_checks;
    elements += r.checked;
    worst = std::max(worst, r.max_rel_error);
    if (!(r.max_rel_error < tol)) failures.push_back(fmt("%s %.2e", name.c_str(), r.max_rel_error));
  };

  const Shape s{2, 3, 4};
  for (auto [stride, dilation] : {std::pair{1, 1}, std::pair{2, 1}, std::pair{1, 2}}) {
    check(fmt("conv2d s%d d%d", stride, dilation),
          [=](Tape<double>&, const auto& v) { return ops::conv2d(v[0], v[1], v[2], stride, dilation); },
          {random_tensor(Shape{2, 6, 7}, rng), random_tensor(Shape{3, 2, 3, 3}, rng), random_tensor(Shape{3}, rng)});
  }
  check("leaky_relu", [](Tape<double>&, const auto& v) { return ops::leaky_relu(v[0], 0.2); },
        {away_from_zero(s, rng)});
  check("relu", [](Tape<double>&, const auto& v) { return ops::relu(v[0]); }, {away_from_zero(s, rng)});
  check("correlation", [](Tape<double>&, const auto& v) { return ops::correlation(v[0], v[1], 2); },
        {random_tensor(Shape{2, 3, 7}, rng), random_tensor(Shape{2, 3, 7}, rng)});
  {
    // Sample positions stay clear of integer columns, where bilinear weights have kinks.
    Tensor<double> disp(Shape{1, 3, 8});
    for (auto& v : disp.values()) v = std::floor(rng.uniform(0.0, 3.0)) + rng.uniform(0.2, 0.8);
    check("warp", [](Tape<double>&, const auto& v) { return ops::warp(v[0], v[1]); },
          {random_tensor(Shape{2, 3, 8}, rng), disp});
  }
  for (bool scale : {false, true}) {
    check(scale ? "upsample scaled" : "upsample",
          [=](Tape<double>&, const auto& v) { return ops::upsample_bilinear(v[0], 4, scale); },
          {random_tensor(Shape{2, 2, 3}, rng)});
  }
  check("add", [](Tape<double>&, const auto& v) { return ops::add(v[0], v[1]); },
        {random_tensor(s, rng), random_tensor(s, rng)});
  check("sub", [](Tape<double>&, const auto& v) { return ops::sub(v[0], v[1]); },
        {random_tensor(s, rng), random_tensor(s, rng)});
  check("mul", [](Tape<double>&, const auto& v) { return ops::mul(v[0], v[1]); },
        {random_tensor(s, rng), random_tensor(s, rng)});
  check("div", [](Tape<double>&, const auto& v) { return ops::div(v[0], v[1]); },
        {random_tensor(s, rng), away_from_zero(s, rng, 0.5, 2.0)});
  check("scale", [](Tape<double>&, const auto& v) { return ops::scale(v[0], 1.7); }, {random_tensor(s, rng)});
  check("add_scalar", [](Tape<double>&, const auto& v) { return ops::add_scalar(v[0], -0.3); },
        {random_tensor(s, rng)});
  check("abs", [](Tape<double>&, const auto& v) { return ops::abs(v[0]); }, {away_from_zero(s, rng)});
  check("box_filter", [](Tape<double>&, const auto& v) { return ops::box_filter(v[0], 3); }, {random_tensor(s, rng)});
  check("channel_mean", [](Tape<double>&, const auto& v) { return ops::channel_mean(v[0]); },
        {random_tensor(s, rng)});
  check("sum", [](Tape<double>&, const auto& v) { return ops::sum(v[0]); }, {random_tensor(s, rng)});
  check("mean", [](Tape<double>&, const auto& v) { return ops::mean(v[0]); }, {random_tensor(s, rng)});
  check("concat", [](Tape<double>&, const auto& v) { return ops::concat(std::vector<Var<double>>{v[0], v[1]}); },
        {random_tensor(Shape{1, 3, 4}, rng), random_tensor(Shape{2, 3, 4}, rng)});
  {
    Tensor<double> mask(Shape{1, 3, 4});
    for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = i % 3 ? 1.0 : 0.0;
    check("masked_mean", [=](Tape<double>&, const auto& v) { return ops::masked_mean(v[0], mask); },
          {random_tensor(Shape{1, 3, 4}, rng)});
  }
  check("weighted_sum",
        [](Tape<double>&, const auto& v) {
          return ops::weighted_sum(std::vector<Var<double>>{ops::sum(v[0]), ops::mean(v[1])},
                                   std::vector<double>{0.3, 2.0});
        },
        {random_tensor(s, rng), random_tensor(s, rng)});

  const losses::PhotometricConfig pc;
  check("ssim", [=](Tape<double>&, const auto& v) { return losses::ssim(v[0], v[1], pc); },
        {random_tensor(Shape{1, 6, 8}, rng, 0.0, 1.0), random_tensor(Shape{1, 6, 8}, rng, 0.0, 1.0)});
  {
    Tensor<double> disp(Shape{1, 6, 10});
    for (auto& v : disp.values()) v = std::floor(rng.uniform(0.0, 3.0)) + rng.uniform(0.2, 0.8);
    check("photometric_loss",
          [=](Tape<double>&, const auto& v) { return losses::photometric_loss(v[0], v[1], v[2], pc); },
          {random_tensor(Shape{1, 6, 10}, rng, 0.0, 1.0), random_tensor(Shape{1, 6, 10}, rng, 0.0, 1.0), disp});
  }
  {
    const auto z = random_tensor<float>(Shape{1, 4, 5}, rng, 0.0, 4.0);
    Bitmap mask(Shape{1, 4, 5});
    for (std::size_t i = 0; i < mask.size(); i += 2) mask[i] = 1.0f;
    ProxyLabels labels{z, mask, mask, mask};
    Tensor<double> pred(Shape{1, 4, 5});
    for (std::size_t i = 0; i < pred.size(); ++i) pred[i] = z[i] + (i % 3 ? 0.5 : -0.5);
    check("proxy_loss", [=](Tape<double>&, const auto& v) { return losses::proxy_loss(v[0], labels); }, {pred});
  }
  {
    GroundTruth gt{random_tensor<float>(Shape{1, 16, 32}, rng, 0.0, 8.0), Bitmap(Shape{1, 16, 32})};
    for (std::size_t i = 0; i < gt.valid.size(); ++i) gt.valid[i] = rng.uniform() < 0.7 ? 1.0f : 0.0f;
    std::vector<Tensor<double>> preds;
    for (int f : {4, 8}) {
      const auto pooled = losses::downsample_ground_truth(gt, f);
      Tensor<double> p(pooled.disparity.shape());
      for (std::size_t i = 0; i < p.size(); ++i) p[i] = pooled.disparity[i] + (i % 2 ? 0.4 : -0.4);
      preds.push_back(p);
    }
    check("multiscale_supervised_loss",
          [=](Tape<double>& t, const auto& v) {
            net::PyramidVars<double> pyr;
            pyr.scales = {v[0], v[1]};
            pyr.factors = {4, 8};
            pyr.full = t.constant(Tensor<double>(gt.disparity.shape()));
            return losses::multiscale_supervised_loss(pyr, gt, std::vector<double>{0.6, 0.4});
          },
          preds);
  }

  // Whole network in f64: probes on every parameter tensor.
  net::NetConfig cfg;
  cfg.width_scale = {1, 4};
  cfg.in_channels = 1;
  const auto net = net::build_network<double>(cfg, 103);
  harness::SyntheticSpec spec;
  const auto frame = harness::render_synthetic_frame(spec, 104, 0);
  const Tensor<double> l = frame.left.cast<double>(), r = frame.right.cast<double>();
  std::vector<Tensor<double>> weights;
  auto loss_of = [&](const net::StereoNet<double>& n, tensor::GradMap<double>* grads) {
    Tape<double> tape;
    auto pyr = net::forward(tape, n, l, r, net::Routes::kFull);
    std::vector<Var<double>> outs = pyr.scales;
    outs.push_back(pyr.full);
    std::vector<Var<double>> terms;
    for (std::size_t k = 0; k < outs.size(); ++k) {
      if (weights.size() <= k) weights.push_back(random_tensor(outs[k].shape(), rng, 0.5, 1.5));
      terms.push_back(ops::sum(ops::mul(outs[k], tape.constant(weights[k]))));
    }
    auto loss = ops::weighted_sum(terms, std::vector<double>(terms.size(), 1.0));
    if (grads) *grads = tensor::backward(loss, n.partition.all());
    return loss.value().item();
  };
  tensor::GradMap<double> analytic;
  const double base = loss_of(net, &analytic);
  auto probe = net;
  int probes = 0, agreed = 0, kinks = 0, bad = 0;
  double net_worst = 0.0;
  for (std::size_t i = 0; i < net.params.size(); ++i) {
    const auto id = static_cast<tensor::ParamId>(i);
    auto& t = probe.params.value(id);
    for (int k = 0; k < 2; ++k) {
      const auto e = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(t.size()) - 1));
      const double keep = t[e], h = 1e-6 * std::max(1.0, std::abs(keep));
      t[e] = keep + h;
      const double up = loss_of(probe, nullptr);
      t[e] = keep - h;
      const double down = loss_of(probe, nullptr);
      t[e] = keep;
      const double numeric = (up - down) / (2 * h);
      const double a = analytic.at(id)[e];
      const double rel = std::abs(a - numeric) / std::max(std::abs(a) + std::abs(numeric), 1e-6);
      ++probes;
      if (rel < tol) {
        ++agreed;
        continue;
      }
      // A crossed relu or clamp kink shows up as one-sided slopes that disagree.
      const double fwd = (up - base) / h, bwd = (base - down) / h;
      const double side_gap = std::abs(fwd - bwd) / std::max(std::abs(fwd) + std::abs(bwd), 1e-6);
      if (side_gap > 10 * tol) {
        ++kinks;
      } else {
        ++bad;
        net_worst = std::max(net_worst, rel);
      }
    }
  }
  const bool kinks_rare = kinks * 50 <= probes;
  Verdict v;
  v.pass = failures.empty() && bad == 0 && kinks_rare;
  v.detail = fmt("%d op checks over %zu elements, worst rel %.2e; network %d/%d probes agree, %d excluded at kinks, "
                 "%d disagree",
                 op_checks, elements, worst, agreed, probes, kinks, bad);
  for (const auto& f : failures) v.detail += "; failed " + f;
  if (bad) v.detail += fmt("; worst network rel %.2e", net_worst);
  return v;
}

// ---------------------------------------------------------------------------
// 2. Single-path SGM against exhaustive depth-first search.

double penalty(int a, int b, double p1, double p2) {
  const int j = std::abs(a - b);
  return j == 0 ? 0.0 : j == 1 ? p1 : p2;
}

// Minimum energy over all disparity sequences along row y that end at
// (x, d), for every x and d. Explores every prefix; a prefix is cut only when
// an earlier prefix reached the same (x, d) at no higher energy, since every
// extension of the cut prefix is then matched by one of the kept prefix.
std::vector<std::vector<double>> dfs_energies(const classic::CostVolume& v, int y, double p1, double p2) {
  const int nd = v.disparities, w = v.width;
  std::vector<std::vector<double>> best(static_cast<std::size_t>(w),
                                        std::vector<double>(static_cast<std::size_t>(nd),
                                                            std::numeric_limits<double>::infinity()));
  std::function<void(int, int, double)> visit = [&](int x, int d, double e) {
    auto& b = best[static_cast<std::size_t>(x)][static_cast<std::size_t>(d)];
    if (e >= b) return;
    b = e;
    if (x + 1 == w) return;
    for (int k = 0; k < nd; ++k) visit(x + 1, k, e + v.at(y, x + 1, k) + penalty(k, d, p1, p2));
  };
  for (int d = 0; d < nd; ++d) visit(0, d, v.at(y, 0, d));
  return best;
}

Verdict sgm_oracle() {
  classic::SgmConfig cfg;
  cfg.paths = {{0, 1}};

  // Hand example: two disparities over three columns.
  classic::CostVolume hand(1, 3, 2, classic::Side::kLeft, 1.0f);
  const float c[] = {1, 0, 0, 1, 1, 0};
  std::copy(std::begin(c), std::end(c), hand.cost.begin());
  cfg.p1 = 1.0f;
  cfg.p2 = 2.0f;
  const auto hand_agg = classic::sgm_aggregate(hand, cfg);
  const auto hand_wta = classic::wta(hand_agg);
  const float expected[] = {1, 0, 1, 1, 1, 0};
  bool hand_ok = std::equal(std::begin(expected), std::end(expected), hand_agg.cost.begin());
  hand_ok = hand_ok && hand_wta.disparity[0] == 1.0f && hand_wta.disparity[1] == 0.0f && hand_wta.disparity[2] == 1.0f;

  Rng rng(202);
  long pixels = 0, argmin_bad = 0, offset_bad = 0, ties = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int h = rng.uniform_int(1, 8), w = rng.uniform_int(1, 8), nd = rng.uniform_int(1, 8);
    classic::CostVolume v(h, w, nd, classic::Side::kLeft, 24.0f);
    for (auto& x : v.cost) x = static_cast<float>(rng.uniform_int(0, 24));
    cfg.p1 = static_cast<float>(rng.uniform_int(0, 7));
    cfg.p2 = cfg.p1 + static_cast<float>(rng.uniform_int(0, 30));
    const auto agg = classic::sgm_aggregate(v, cfg);
    const auto res = classic::wta(agg);
    for (int y = 0; y < h; ++y) {
      const auto e = dfs_energies(v, y, cfg.p1, cfg.p2);
      for (int x = 0; x < w; ++x) {
        const auto& ex = e[static_cast<std::size_t>(x)];
        const auto it = std::min_element(ex.begin(), ex.end());  // first minimum: smaller d wins ties
        ties += std::count(ex.begin(), ex.end(), *it) > 1;
        const float* curve = agg.curve(y, x);
        const double a0 = *std::min_element(curve, curve + nd);
        for (int d = 0; d < nd; ++d) {
          if (curve[d] - a0 != ex[static_cast<std::size_t>(d)] - *it) {
            ++offset_bad;
            break;
          }
        }
        const auto want = static_cast<float>(it - ex.begin());
        argmin_bad += res.disparity.at(0, y, x) != want;
        ++pixels;
      }
    }
  }
  Verdict v;
  v.pass = hand_ok && argmin_bad == 0 && offset_bad == 0;
  v.detail = fmt("hand example %s; 200 volumes, %ld pixels (%ld with tied minima): %ld argmin mismatches, %ld curves "
                 "off by more than a constant",
                 hand_ok ? "ok" : "wrong", pixels, ties, argmin_bad, offset_bad);
  return v;
}

// ---------------------------------------------------------------------------
// 3. Modular update state machine.

bool bitwise_equal(const Tensor<float>& a, const Tensor<float>& b) {
  return a.shape() == b.shape() && std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

Verdict mad_state_machine() {
  // (a) Only the sampled module's bytes change.
  net::NetConfig tiny;
  tiny.width_scale = {1, 8};
  tiny.in_channels = 1;
  harness::SyntheticSpec spec;
  spec.segments[0].frames = 16;
  const auto frames = harness::gen_synthetic_sequence(spec, 301);

  auto warm_cfg = adapt::EngineConfig{};
  warm_cfg.mode = adapt::Mode::kFull;
  warm_cfg.lr = 1e-3;
  adapt::Engine warm(warm_cfg, net::build_network<float>(tiny, 302));
  warm.step_full(harness::render_synthetic_frame(spec, 303, 0), nullptr);
  const auto start_net = warm.network();

  int steps = 0, confined = 0, exact_module = 0;
  for (auto mode : {adapt::Mode::kMad, adapt::Mode::kMadProxy}) {
    adapt::EngineConfig cfg;
    cfg.mode = mode;
    cfg.lr = 1e-3;
    cfg.seed = 304;
    cfg.sgm_distill.sgm.max_disparity = 24;
    adapt::Engine engine(cfg, start_net);
    for (const auto& f : frames) {
      const auto before = engine.network().params;
      const auto rec = engine.process(f);
      if (!rec.updated) continue;
      ++steps;
      const auto& module = engine.network().partition.modules[static_cast<std::size_t>(rec.phi - 1)];
      std::size_t changed = 0;
      bool outside = false;
      for (std::size_t i = 0; i < before.size(); ++i) {
        const auto id = static_cast<tensor::ParamId>(i);
        if (bitwise_equal(before.value(id), engine.network().params.value(id))) continue;
        ++changed;
        outside |= module.count(id) == 0;
      }
      confined += changed > 0 && !outside;
      exact_module += changed == module.size() && !outside;
    }
  }
  const bool a_ok = steps > 0 && confined == steps;

  // (b) Histogram recurrence against a direct transcription, including the bootstrap step.
  auto reference = [](std::vector<double>& H, double& l1, double& l2, int& prev, long& t, double loss, int phi,
                      double delta, double lambda) {
    double gamma = 0.0;
    if (t > 0) gamma = (2.0 * l1 - l2) - loss;
    for (double& h : H) h = delta * h;
    if (prev > 0) H[static_cast<std::size_t>(prev - 1)] += lambda * gamma;
    if (t == 0) l1 = loss;
    l2 = l1;
    l1 = loss;
    prev = phi;
    ++t;
  };
  long compared = 0, mismatched = 0;
  auto run_script = [&](int p, double delta, double lambda, const std::vector<double>& losses,
                        const std::vector<int>& phis) {
    adapt::AdaptState s(p, 0);
    std::vector<double> H(static_cast<std::size_t>(p), 0.0);
    double l1 = 0.0, l2 = 0.0;
    int prev = 0;
    long t = 0;
    for (std::size_t i = 0; i < losses.size(); ++i) {
      adapt::update_histogram(s, losses[i], phis[i], delta, lambda);
      reference(H, l1, l2, prev, t, losses[i], phis[i], delta, lambda);
      ++compared;
      mismatched += s.H != H || s.prev_index != prev || s.prev_loss_1 != l1 || s.prev_loss_2 != l2;
    }
  };
  run_script(2, 0.99, 0.01, {1.0, 0.8, 0.5, 0.5, 0.7, 0.2, 0.9}, {1, 2, 2, 1, 1, 2, 1});
  run_script(5, 0.9, 0.5, {3.7, 3.7, 3.7, 1.0}, {2, 4, 5, 1});
  Rng rng(305);
  for (int trial = 0; trial < 100; ++trial) {
    const int p = rng.uniform_int(1, 6);
    const double delta = rng.uniform(0.5, 1.0), lambda = rng.uniform(0.0, 0.1);
    std::vector<double> losses;
    std::vector<int> phis;
    for (int k = 0; k < 40; ++k) {
      losses.push_back(rng.uniform(0.0, 2.0));
      phis.push_back(rng.uniform_int(1, p));
    }
    run_script(p, delta, lambda, losses, phis);
  }
  // The engine's own histogram must equal a replay of its logged losses and modules.
  {
    adapt::EngineConfig cfg;
    cfg.mode = adapt::Mode::kMad;
    cfg.lr = 1e-3;
    cfg.seed = 306;
    adapt::Engine engine(cfg, start_net);
    std::vector<double> H(engine.state().H.size(), 0.0);
    double l1 = 0.0, l2 = 0.0;
    int prev = 0;
    long t = 0;
    for (const auto& f : frames) {
      const auto rec = engine.process(f);
      if (!rec.updated) continue;
      reference(H, l1, l2, prev, t, *rec.loss, rec.phi, cfg.delta, cfg.lambda);
      ++compared;
      mismatched += engine.state().H != H;
    }
  }
  const bool b_ok = mismatched == 0;

  // (c) Uniform histogram draws.
  Rng draws(307);
  std::vector<int> counts(5, 0);
  const int n = 100000;
  for (int i = 0; i < n; ++i) ++counts[static_cast<std::size_t>(adapt::sample_module(std::vector<double>(5, 0.0), draws) - 1)];
  double max_dev = 0.0;
  for (int cnt : counts) max_dev = std::max(max_dev, std::abs(cnt / static_cast<double>(n) - 0.2));
  const bool c_ok = max_dev < 0.01;

  Verdict v;
  v.pass = a_ok && b_ok && c_ok;
  v.detail = fmt("(a) %d/%d modular steps changed only the sampled module (%d changed all of it); (b) %ld/%ld "
                 "histogram states exact; (c) uniform draws max deviation %.4f over 1e5",
                 confined, steps, exact_module, compared - mismatched, compared, max_dev);
  return v;
}

// ---------------------------------------------------------------------------
// 4. Confidence filtering sharpens the proxy.

Verdict distillation_quality() {
  harness::SyntheticSpec spec;
  spec.height = 128;
  spec.width = 256;
  spec.max_disparity = 32;
  spec.segments[0].frames = 50;
  spec.segments[0].photometric.noise = 0.01;

  confidence::DistillConfig sgm;
  sgm.matcher = confidence::Matcher::kSgm;
  sgm.sgm.max_disparity = 48;
  sgm.filter.mode = confidence::FilterMode::kLrCheck;
  confidence::DistillConfig bm;
  bm.matcher = confidence::Matcher::kBm;
  bm.bm.max_disparity = 48;
  bm.filter.mode = confidence::FilterMode::kWild;

  double sgm_raw = 0, sgm_filt = 0, sgm_dens = 0, bm_raw = 0, bm_filt = 0, bm_dens = 0;
  int n = 0;
  for (int i = 0; i < spec.total_frames(); ++i) {
    const auto frame = harness::render_synthetic_frame(spec, 401, i);
    const auto a = confidence::distill(frame, sgm).report;
    const auto b = confidence::distill(frame, bm).report;
    sgm_raw += a.raw_d1;
    sgm_filt += a.filtered_d1;
    sgm_dens += a.density;
    bm_raw += b.raw_d1;
    bm_filt += b.filtered_d1;
    bm_dens += b.density;
    ++n;
  }
  sgm_raw /= n, sgm_filt /= n, sgm_dens /= n, bm_raw /= n, bm_filt /= n, bm_dens /= n;
  Verdict v;
  v.pass = sgm_filt < sgm_raw && bm_filt < bm_raw && bm_dens < sgm_dens;
  v.detail = fmt("50 frames: sgm+lr D1 %.2f%% -> %.2f%% (density %.3f); bm+wild D1 %.2f%% -> %.2f%% (density %.3f)",
                 sgm_raw, sgm_filt, sgm_dens, bm_raw, bm_filt, bm_dens);
  return v;
}

// ---------------------------------------------------------------------------
// 5-7. Adaptation under domain shift.

harness::SyntheticSpec desk_spec() {
  harness::SyntheticSpec spec;
  spec.height = 128;
  spec.width = 256;
  spec.max_disparity = 32;
  return spec;
}

const harness::PhotometricShift kShift{0.0, 0.5, 0.3, 0.01};

net::StereoNet<float> pretrained_network(std::uint64_t seed) {
  auto train = desk_spec();
  train.segments[0].frames = 2000;
  net::NetConfig cfg;
  cfg.width_scale = {1, 4};
  cfg.in_channels = 1;
  auto net = net::build_network<float>(cfg, seed);
  adapt::PretrainConfig pc;
  pc.steps = 3000;
  pc.seed = seed;
  const std::uint64_t frame_seed = 1000 + seed;
  adapt::pretrain(
      net, static_cast<std::size_t>(train.total_frames()),
      [&](std::size_t i) { return harness::render_synthetic_frame(train, frame_seed, static_cast<int>(i)); }, pc);
  return net;
}

adapt::EngineConfig adapt_config(adapt::Mode mode, std::uint64_t seed) {
  adapt::EngineConfig cfg;
  cfg.mode = mode;
  cfg.lr = 1e-3;
  cfg.momentum = 0.9;
  cfg.seed = seed;
  cfg.timing = true;
  cfg.sgm_distill.sgm.max_disparity = 48;
  return cfg;
}

struct ModeRun {
  double tail_epe = 0.0;  // mean EPE over the last 100 frames
  double median_ms = 0.0; // median wall time of updating frames
};

ModeRun run_mode(const net::StereoNet<float>& net, const std::vector<StereoFrame>& seq, adapt::Mode mode,
                 std::uint64_t seed) {
  adapt::Engine engine(adapt_config(mode, seed), net);
  ModeRun out;
  std::vector<double> ms;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    const auto rec = engine.process(seq[i]);
    if (i + 100 >= seq.size()) out.tail_epe += rec.metrics.epe;
    if (rec.updated) ms.push_back(rec.ms);
  }
  out.tail_epe /= 100.0;
  out.median_ms = median(ms);
  return out;
}

struct SeedRuns {
  std::uint64_t seed = 0;
  ModeRun none, full, full_proxy, mad, mad_proxy;
};

struct ShiftResults {
  std::vector<SeedRuns> seeds;
  net::StereoNet<float> seed1_net;
};

ShiftResults run_shift_experiments() {
  ShiftResults out;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const auto t0 = Clock::now();
    auto net = pretrained_network(seed);
    progress(fmt("seed %llu pretrained in %.0f s", static_cast<unsigned long long>(seed), seconds_since(t0)));
    auto spec = desk_spec();
    spec.segments[0].frames = 150;
    harness::SegmentSpec shifted;
    shifted.domain = "B";
    shifted.frames = 150;
    shifted.photometric = kShift;
    spec.segments.push_back(shifted);
    const auto seq = harness::gen_synthetic_sequence(spec, seed);
    SeedRuns r;
    r.seed = seed;
    r.none = run_mode(net, seq, adapt::Mode::kNone, seed);
    r.full = run_mode(net, seq, adapt::Mode::kFull, seed);
    r.full_proxy = run_mode(net, seq, adapt::Mode::kFullProxy, seed);
    r.mad = run_mode(net, seq, adapt::Mode::kMad, seed);
    r.mad_proxy = run_mode(net, seq, adapt::Mode::kMadProxy, seed);
    progress(fmt("seed %llu tail EPE none %.3f full %.3f full++ %.3f mad %.3f mad++ %.3f; median ms full++ %.1f "
                 "mad++ %.1f",
                 static_cast<unsigned long long>(seed), r.none.tail_epe, r.full.tail_epe, r.full_proxy.tail_epe,
                 r.mad.tail_epe, r.mad_proxy.tail_epe, r.full_proxy.median_ms, r.mad_proxy.median_ms));
    out.seeds.push_back(r);
    if (seed == 1) out.seed1_net = std::move(net);
  }
  return out;
}

Verdict adaptation_gains(const ShiftResults& res) {
  struct Req {
    const char* name;
    ModeRun SeedRuns::*run;
    double needed;
  };
  const Req reqs[] = {{"full", &SeedRuns::full, 0.30},
                      {"full++", &SeedRuns::full_proxy, 0.30},
                      {"mad++", &SeedRuns::mad_proxy, 0.30},
                      {"mad", &SeedRuns::mad, 0.15}};
  bool all = true;
  std::string detail;
  for (const auto& q : reqs) {
    int passed = 0;
    std::string gains;
    for (const auto& s : res.seeds) {
      const double gain = 1.0 - (s.*q.run).tail_epe / s.none.tail_epe;
      passed += gain >= q.needed;
      gains += fmt("%s%.0f%%", gains.empty() ? "" : "/", 100 * gain);
    }
    const bool ok = passed >= 2;
    all &= ok;
    detail += fmt("%s%s %s (need %.0f%%, %d/3 seeds)%s", detail.empty() ? "" : "; ", q.name, gains.c_str(),
                  100 * q.needed, passed, ok ? "" : " FAIL");
  }
  Verdict v;
  v.pass = all;
  v.detail = "EPE reduction vs none over the last 100 frames: " + detail;
  return v;
}

Verdict modular_vs_full(const ShiftResults& res) {
  int close = 0, faster = 0;
  std::string detail;
  for (const auto& s : res.seeds) {
    const double gap = std::abs(s.mad_proxy.tail_epe - s.full_proxy.tail_epe) / s.full_proxy.tail_epe;
    close += gap <= 0.25;
    faster += s.mad_proxy.median_ms < s.full_proxy.median_ms;
    detail += fmt("%sseed %llu: EPE mad++ %.3f vs full++ %.3f (gap %.0f%%), step %.1f vs %.1f ms",
                  detail.empty() ? "" : "; ", static_cast<unsigned long long>(s.seed), s.mad_proxy.tail_epe,
                  s.full_proxy.tail_epe, 100 * gap, s.mad_proxy.median_ms, s.full_proxy.median_ms);
  }
  Verdict v;
  v.pass = close >= 2 && faster >= 2;
  v.detail = fmt("within 25%% on %d/3 seeds, faster on %d/3 seeds; ", close, faster) + detail;
  return v;
}

double frozen_epe(const net::StereoNet<float>& n, const std::vector<StereoFrame>& frames) {
  double e = 0.0;
  for (const auto& f : frames) e += harness::metrics(net::predict(n, f.left, f.right).full, *f.gt).epe;
  return e / static_cast<double>(frames.size());
}

Verdict forgetting(const net::StereoNet<float>& pretrained) {
  auto domain = [](const char* name, harness::PhotometricShift shift, std::uint64_t seed) {
    auto spec = desk_spec();
    spec.segments[0].domain = name;
    spec.segments[0].frames = 150;
    spec.segments[0].photometric = shift;
    return harness::gen_synthetic_sequence(spec, seed);
  };
  const auto A = domain("A", {0.0, 0.5, 0.3, 0.01}, 21);
  const auto B = domain("B", {-0.1, 2.0, 0.5, 0.01}, 22);
  adapt::Engine engine(adapt_config(adapt::Mode::kMadProxy, 3), pretrained);
  const double never = frozen_epe(pretrained, A);
  for (const auto& f : A) engine.process(f);
  const double after_a = frozen_epe(engine.network(), A);
  for (const auto& f : B) engine.process(f);
  const double after_b = frozen_epe(engine.network(), A);
  Verdict v;
  v.pass = after_b <= 1.25 * after_a && after_b < never;
  v.detail = fmt("frozen EPE on A: never adapted %.3f, after pass A %.3f, after pass B %.3f (ratio %.3f, limit 1.25)",
                 never, after_a, after_b, after_b / after_a);
  return v;
}

// ---------------------------------------------------------------------------
// 8. Metric definitions.

Verdict metric_units() {
  auto one_pixel = [](float pred, float gt) {
    return harness::metrics(DisparityMap::chw(1, 1, 1, pred), GroundTruth{DisparityMap::chw(1, 1, 1, gt),
                                                                            Bitmap::chw(1, 1, 1, 1.0f)});
  };
  const auto big = one_pixel(104.0f, 100.0f);
  const auto small = one_pixel(14.0f, 10.0f);
  const bool inlier = big.d1_all == 0.0 && !harness::is_outlier(4.0, 100.0);
  const bool outlier = small.d1_all == 100.0 && harness::is_outlier(4.0, 10.0);

  // EPE is the mean absolute error over valid pixels only.
  DisparityMap pred(Shape{1, 1, 4}, std::vector<float>{1, 2, 3, 50});
  GroundTruth gt{DisparityMap(Shape{1, 1, 4}, std::vector<float>{2, 2, 1, 0}),
                 Bitmap(Shape{1, 1, 4}, std::vector<float>{1, 1, 1, 0})};
  const auto m = harness::metrics(pred, gt);
  const bool epe_ok = m.epe == 1.0 && m.valid_px == 3 && m.d1_all == 0.0;
  Verdict v;
  v.pass = inlier && outlier && epe_ok;
  v.detail = fmt("error 4 at gt 100: D1 %.0f%%; error 4 at gt 10: D1 %.0f%%; masked EPE %.3f over %zu px (want 1 over 3)",
                 big.d1_all, small.d1_all, m.epe, m.valid_px);
  return v;
}

// ---------------------------------------------------------------------------
// 9. Reproducible command-line runs.

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Verdict reproducible_cli() {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / ("stereoadapt_acceptance_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  harness::SyntheticSpec spec;
  spec.segments[0].frames = 12;
  harness::SegmentSpec shifted;
  shifted.domain = "B";
  shifted.frames = 12;
  shifted.photometric = kShift;
  spec.segments.push_back(shifted);
  harness::synthetic_spec_to_config(spec).save((dir / "spec.cfg").string());

  std::string detail;
  bool all = true;
  for (const char* mode : {"mad++", "mad", "full"}) {
    std::string logs[2], summaries[2];
    bool ran = true;
    for (int k = 0; k < 2; ++k) {
      const auto log = dir / fmt("%s_%d.csv", mode, k);
      const auto summary = dir / fmt("%s_%d.json", mode, k);
      const std::string cmd = fmt("\"%s\" adapt \"%s\" --seq-seed 9 --mode %s --seed 4 --lr 1e-3 --width 1/8 "
                                  "--net-seed 2 --proxy-max-disp 24 --quiet --log \"%s\" --summary \"%s\" > /dev/null",
                                  STEREOADAPT_CLI_PATH, (dir / "spec.cfg").c_str(), mode, log.c_str(),
                                  summary.c_str());
      ran &= std::system(cmd.c_str()) == 0;
      logs[k] = slurp(log);
      summaries[k] = slurp(summary);
    }
    const bool same = ran && !logs[0].empty() && logs[0] == logs[1] && summaries[0] == summaries[1];
    all &= same;
    detail += fmt("%s%s %s (%zu + %zu bytes)", detail.empty() ? "" : "; ", mode,
                  !ran ? "run failed" : same ? "identical" : "differ", logs[0].size(), summaries[0].size());
  }
  fs::remove_all(dir);
  Verdict v;
  v.pass = all;
  v.detail = "two invocations per mode: " + detail;
  return v;
}

}  // namespace
}  // namespace stereoadapt

int main(int argc, char** argv) {
  using namespace stereoadapt;
  bool strict = false;
  std::set<int> only;
  std::ofstream report_file;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--strict") == 0) {
      strict = true;
    } else if (std::strcmp(argv[i], "--report") == 0 && i + 1 < argc) {
      report_file.open(argv[++i]);
    } else {
      only.insert(std::atoi(argv[i]));
    }
  }
  auto emit = [&](const std::string& line) {
    std::fputs(line.c_str(), stdout);
    std::fflush(stdout);
    if (report_file.is_open()) report_file << line << std::flush;
  };
  auto wanted = [&](int n) { return only.empty() || only.count(n) != 0; };
  int passed = 0, total = 0;
  // `budget` is the allowed wall time in seconds (0: none); `prior` is time
  // already spent on shared work the criterion depends on.
  auto report = [&](int n, const char* title, const std::function<Verdict()>& fn, double budget = 0.0,
                    double prior = 0.0) {
    if (!wanted(n)) return;
    const auto t0 = Clock::now();
    Verdict v;
    try {
      v = fn();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    const double elapsed = seconds_since(t0) + prior;
    if (budget > 0.0 && elapsed >= budget) {
      v.pass = false;
      v.detail += fmt("; over the %.0f s budget", budget);
    }
    ++total;
    passed += v.pass;
    emit(fmt("criterion %d (%s): %s - ", n, title, v.pass ? "PASS" : "FAIL") + v.detail +
         fmt(" [%.1f s]\n", elapsed));
  };

  report(1, "gradient integrity", gradient_integrity, 120.0);
  report(2, "SGM oracle", sgm_oracle, 30.0);
  report(3, "modular update state", mad_state_machine, 60.0);
  report(4, "proxy distillation", distillation_quality, 120.0);

  ShiftResults shift;
  bool shift_ok = true;
  std::string shift_error;
  const auto shift_start = Clock::now();
  try {
    if (wanted(5) || wanted(6) || wanted(7)) shift = run_shift_experiments();
  } catch (const std::exception& e) {
    shift_ok = false;
    shift_error = e.what();
  }
  const double shift_seconds = seconds_since(shift_start);
  auto needs_shift = [&](auto fn) {
    return [=, &shift]() -> Verdict {
      if (!shift_ok) return {false, "experiment threw: " + shift_error};
      return fn(shift);
    };
  };
  report(5, "adaptation gains", needs_shift(adaptation_gains), 900.0, shift_seconds);
  report(6, "modular vs full", needs_shift(modular_vs_full));
  // Reuses the seed-1 network pretrained for criterion 5; only the A/B/A runs count here.
  report(7, "forgetting", needs_shift([](const ShiftResults& r) { return forgetting(r.seed1_net); }), 900.0);
  report(8, "metric definitions", metric_units);
  report(9, "reproducible runs", reproducible_cli);

  emit(fmt("%d/%d criteria passed\n", passed, total));
  return strict && passed != total ? 1 : 0;
}
