#include "hmadapt/net.hpp"

#include <cmath>
#include <stdexcept>

namespace hmadapt {
namespace {

Tensor init_conv(int out_ch, int in_ch, int k, Rng& rng) {
  Tensor w(out_ch, in_ch, k, k);
  const double fan_in = static_cast<double>(in_ch) * k * k;
  const double bound = std::sqrt(6.0 / fan_in);
  for (double& x : w.v) x = rng.uniform(-bound, bound);
  return w;
}

}  // namespace

void NetConfig::validate() const {
  if (input_size <= 0) throw std::invalid_argument("net: input_size must be positive");
  if (classes < 2) throw std::invalid_argument("net: need at least two classes");
  if (stage_channels.empty()) throw std::invalid_argument("net: no stages");
  for (int ch : stage_channels)
    if (ch <= 0) throw std::invalid_argument("net: stage channels must be positive");
  if (block_count < static_cast<int>(stage_channels.size()))
    throw std::invalid_argument("net: need at least one block per stage");
  if (stem_stride < 1) throw std::invalid_argument("net: stem_stride must be >= 1");
  if (input_size % total_stride() != 0)
    throw std::invalid_argument("net: input_size must be divisible by the total stride");
  if (!(norm_eps > 0.0)) throw std::invalid_argument("net: norm_eps must be positive");
  if (!(norm_momentum > 0.0) || !(norm_momentum < 1.0))
    throw std::invalid_argument("net: norm_momentum must be in (0,1)");
}

int NetConfig::total_stride() const {
  int s = stem_stride;
  for (std::size_t i = 1; i < stage_channels.size(); ++i) s *= 2;
  return s;
}

std::vector<BlockPlan> plan_blocks(const NetConfig& cfg) {
  cfg.validate();
  const int stages = static_cast<int>(cfg.stage_channels.size());
  const int base = cfg.block_count / stages;
  const int extra = cfg.block_count % stages;  // earlier stages take the remainder
  std::vector<BlockPlan> plans;
  int in_ch = cfg.stage_channels[0];  // stem output width
  for (int s = 0; s < stages; ++s) {
    const int blocks_here = base + (s < extra ? 1 : 0);
    for (int b = 0; b < blocks_here; ++b) {
      BlockPlan p;
      p.in_ch = in_ch;
      p.out_ch = cfg.stage_channels[s];
      p.stride = (b == 0 && s > 0) ? 2 : 1;
      p.has_proj = (p.stride != 1) || (p.in_ch != p.out_ch);
      plans.push_back(p);
      in_ch = p.out_ch;
    }
  }
  return plans;
}

NetParams init_net(const NetConfig& cfg, Rng& rng) {
  cfg.validate();
  NetParams p;
  p.config = cfg;
  p.stem = init_conv(cfg.stage_channels[0], 1, 3, rng);
  p.stem_norm = make_norm(cfg.stage_channels[0]);
  for (const BlockPlan& plan : plan_blocks(cfg)) {
    BlockParams b;
    b.conv1 = init_conv(plan.out_ch, plan.in_ch, 3, rng);
    b.norm1 = make_norm(plan.out_ch);
    b.conv2 = init_conv(plan.out_ch, plan.out_ch, 3, rng);
    b.norm2 = make_norm(plan.out_ch);
    if (plan.has_proj) {
      b.proj = init_conv(plan.out_ch, plan.in_ch, 1, rng);
      b.proj_norm = make_norm(plan.out_ch);
    }
    p.blocks.push_back(std::move(b));
  }
  const int feat = cfg.stage_channels.back();
  p.fc.in_dim = feat;
  p.fc.out_dim = cfg.classes;
  p.fc.weight.resize(static_cast<std::size_t>(feat) * cfg.classes);
  const double bound = std::sqrt(6.0 / feat);
  for (double& x : p.fc.weight) x = rng.uniform(-bound, bound);
  p.fc.bias.assign(cfg.classes, 0.0);
  return p;
}

NetParams make_net_shell(const NetConfig& cfg) {
  cfg.validate();
  NetParams p;
  p.config = cfg;
  p.stem = Tensor(cfg.stage_channels[0], 1, 3, 3);
  p.stem_norm = make_norm(cfg.stage_channels[0]);
  for (const BlockPlan& plan : plan_blocks(cfg)) {
    BlockParams b;
    b.conv1 = Tensor(plan.out_ch, plan.in_ch, 3, 3);
    b.norm1 = make_norm(plan.out_ch);
    b.conv2 = Tensor(plan.out_ch, plan.out_ch, 3, 3);
    b.norm2 = make_norm(plan.out_ch);
    if (plan.has_proj) {
      b.proj = Tensor(plan.out_ch, plan.in_ch, 1, 1);
      b.proj_norm = make_norm(plan.out_ch);
    }
    p.blocks.push_back(std::move(b));
  }
  p.fc.in_dim = cfg.stage_channels.back();
  p.fc.out_dim = cfg.classes;
  p.fc.weight.assign(static_cast<std::size_t>(p.fc.in_dim) * p.fc.out_dim, 0.0);
  p.fc.bias.assign(p.fc.out_dim, 0.0);
  return p;
}

namespace {

template <typename Params, typename Fn>
void visit_trainable_impl(Params& params, const Fn& fn) {
  fn("stem.conv", params.stem.v);
  fn("stem.norm.gamma", params.stem_norm.gamma);
  fn("stem.norm.beta", params.stem_norm.beta);
  for (std::size_t i = 0; i < params.blocks.size(); ++i) {
    auto& b = params.blocks[i];
    const std::string tag = "block" + std::to_string(i);
    fn(tag + ".conv1", b.conv1.v);
    fn(tag + ".norm1.gamma", b.norm1.gamma);
    fn(tag + ".norm1.beta", b.norm1.beta);
    fn(tag + ".conv2", b.conv2.v);
    fn(tag + ".norm2.gamma", b.norm2.gamma);
    fn(tag + ".norm2.beta", b.norm2.beta);
    if (!b.proj.v.empty()) {
      fn(tag + ".proj", b.proj.v);
      fn(tag + ".proj_norm.gamma", b.proj_norm.gamma);
      fn(tag + ".proj_norm.beta", b.proj_norm.beta);
    }
  }
  fn("fc.weight", params.fc.weight);
  fn("fc.bias", params.fc.bias);
}

template <typename Params, typename Fn>
void visit_all_impl(Params& params, const Fn& fn) {
  visit_trainable_impl(params, fn);
  fn("stem.norm.run_mean", params.stem_norm.run_mean);
  fn("stem.norm.run_var", params.stem_norm.run_var);
  for (std::size_t i = 0; i < params.blocks.size(); ++i) {
    auto& b = params.blocks[i];
    const std::string tag = "block" + std::to_string(i);
    fn(tag + ".norm1.run_mean", b.norm1.run_mean);
    fn(tag + ".norm1.run_var", b.norm1.run_var);
    fn(tag + ".norm2.run_mean", b.norm2.run_mean);
    fn(tag + ".norm2.run_var", b.norm2.run_var);
    if (!b.proj.v.empty()) {
      fn(tag + ".proj_norm.run_mean", b.proj_norm.run_mean);
      fn(tag + ".proj_norm.run_var", b.proj_norm.run_var);
    }
  }
}

}  // namespace

void visit_trainable(NetParams& params,
                     const std::function<void(const std::string&, std::vector<double>&)>& fn) {
  visit_trainable_impl(params, fn);
}

void visit_trainable(const NetParams& params,
                     const std::function<void(const std::string&, const std::vector<double>&)>& fn) {
  visit_trainable_impl(params, fn);
}

std::size_t trainable_count(const NetParams& params) {
  std::size_t total = 0;
  visit_trainable(params, [&](const std::string&, const std::vector<double>& v) {
    total += v.size();
  });
  return total;
}

void visit_all(const NetParams& params,
               const std::function<void(const std::string&, const std::vector<double>&)>& fn) {
  visit_all_impl(params, fn);
}

void visit_all(NetParams& params,
               const std::function<void(const std::string&, std::vector<double>&)>& fn) {
  visit_all_impl(params, fn);
}

Tensor block_forward(const BlockParams& p, const BlockPlan& plan, const Tensor& x,
                     bool train, double eps, double momentum, BlockCache* cache) {
  Tensor c1 = conv2d_forward(x, p.conv1, plan.stride, 1);
  NormCache n1cache;
  Tensor b1 = norm_forward(c1, p.norm1, train, eps, momentum, cache ? &n1cache : nullptr);
  Tensor r1 = relu_forward(b1);
  Tensor c2 = conv2d_forward(r1, p.conv2, 1, 1);
  NormCache n2cache;
  Tensor b2 = norm_forward(c2, p.norm2, train, eps, momentum, cache ? &n2cache : nullptr);

  Tensor shortcut;
  NormCache pncache;
  if (plan.has_proj) {
    Tensor pc = conv2d_forward(x, p.proj, plan.stride, 0);
    shortcut = norm_forward(pc, p.proj_norm, train, eps, momentum, cache ? &pncache : nullptr);
    if (cache) cache->proj_out = std::move(pc);
  } else {
    shortcut = x;
  }

  Tensor sum = b2;
  for (std::size_t i = 0; i < sum.v.size(); ++i) sum.v[i] += shortcut.v[i];
  Tensor out = relu_forward(sum);

  if (cache) {
    cache->input = x;
    cache->conv1_out = std::move(c1);
    cache->norm1 = std::move(n1cache);
    cache->relu1_out = std::move(r1);
    cache->conv2_out = std::move(c2);
    cache->norm2 = std::move(n2cache);
    cache->proj_norm = std::move(pncache);
    cache->sum_out = std::move(sum);
  }
  return out;
}

Tensor block_backward(const BlockParams& p, const BlockPlan& plan, const BlockCache& cache,
                      const Tensor& dy, BlockParams* gp) {
  // Through the output ReLU.
  Tensor dsum(dy.n, dy.c, dy.h, dy.w);
  relu_backward(cache.sum_out, dy, &dsum);

  Tensor dx(cache.input.n, cache.input.c, cache.input.h, cache.input.w);

  // Shortcut branch.
  if (plan.has_proj) {
    Tensor dproj_conv(cache.proj_out.n, cache.proj_out.c, cache.proj_out.h, cache.proj_out.w);
    norm_backward(p.proj_norm, cache.proj_norm, dsum, &dproj_conv,
                  gp ? &gp->proj_norm.gamma : nullptr, gp ? &gp->proj_norm.beta : nullptr);
    conv2d_backward(cache.input, p.proj, plan.stride, 0, dproj_conv, &dx,
                    gp ? &gp->proj : nullptr);
  } else {
    for (std::size_t i = 0; i < dx.v.size(); ++i) dx.v[i] += dsum.v[i];
  }

  // Main branch: norm2 <- conv2 <- relu1 <- norm1 <- conv1.
  Tensor dc2(cache.conv2_out.n, cache.conv2_out.c, cache.conv2_out.h, cache.conv2_out.w);
  norm_backward(p.norm2, cache.norm2, dsum, &dc2,
                gp ? &gp->norm2.gamma : nullptr, gp ? &gp->norm2.beta : nullptr);
  Tensor dr1(cache.relu1_out.n, cache.relu1_out.c, cache.relu1_out.h, cache.relu1_out.w);
  conv2d_backward(cache.relu1_out, p.conv2, 1, 1, dc2, &dr1, gp ? &gp->conv2 : nullptr);
  Tensor db1(dr1.n, dr1.c, dr1.h, dr1.w);
  // relu1 input is norm1 output; its sign matches the cached relu output, but
  // the exact pre-activation is what gates the gradient.
  {
    // Reconstruct gating from conv1_out through norm1: xhat*gamma+beta > 0 is
    // equivalent to relu1_out > 0 (strictly positive outputs), so the cached
    // relu output works as the mask.
    for (std::size_t i = 0; i < db1.v.size(); ++i)
      db1.v[i] = cache.relu1_out.v[i] > 0.0 ? dr1.v[i] : 0.0;
  }
  Tensor dc1(cache.conv1_out.n, cache.conv1_out.c, cache.conv1_out.h, cache.conv1_out.w);
  norm_backward(p.norm1, cache.norm1, db1, &dc1,
                gp ? &gp->norm1.gamma : nullptr, gp ? &gp->norm1.beta : nullptr);
  conv2d_backward(cache.input, p.conv1, plan.stride, 1, dc1, &dx, gp ? &gp->conv1 : nullptr);
  return dx;
}

Tensor forward(const NetParams& params, const Tensor& batch, bool train,
               ForwardCache* cache) {
  const NetConfig& cfg = params.config;
  if (batch.c != 1 || batch.h != cfg.input_size || batch.w != cfg.input_size)
    throw std::invalid_argument("net: batch shape does not match config");

  Tensor stem_c = conv2d_forward(batch, params.stem, cfg.stem_stride, 1);
  NormCache stem_ncache;
  Tensor stem_b = norm_forward(stem_c, params.stem_norm, train, cfg.norm_eps,
                               cfg.norm_momentum, cache ? &stem_ncache : nullptr);
  Tensor x = relu_forward(stem_b);

  if (cache) {
    cache->train_mode = train;
    cache->input = batch;
    cache->stem_out = std::move(stem_c);
    cache->stem_norm = std::move(stem_ncache);
    cache->stem_relu = x;
    cache->blocks.clear();
  }

  const std::vector<BlockPlan> plans = plan_blocks(cfg);
  for (std::size_t i = 0; i < plans.size(); ++i) {
    BlockCache bc;
    x = block_forward(params.blocks[i], plans[i], x, train, cfg.norm_eps,
                      cfg.norm_momentum, cache ? &bc : nullptr);
    if (cache) cache->blocks.push_back(std::move(bc));
  }

  Tensor pooled = global_avg_pool(x);
  Tensor logits = fc_forward(pooled, params.fc);
  if (cache) {
    cache->pooled = std::move(pooled);
    cache->logits = logits;
    return logits;
  }
  return logits;
}

void commit_running_stats(NetParams& params, const ForwardCache& cache) {
  if (!cache.train_mode) return;
  auto commit = [](NormParams& p, const NormCache& c) {
    p.run_mean = c.new_run_mean;
    p.run_var = c.new_run_var;
  };
  commit(params.stem_norm, cache.stem_norm);
  const std::vector<BlockPlan> plans = plan_blocks(params.config);
  for (std::size_t i = 0; i < params.blocks.size(); ++i) {
    commit(params.blocks[i].norm1, cache.blocks[i].norm1);
    commit(params.blocks[i].norm2, cache.blocks[i].norm2);
    if (plans[i].has_proj) commit(params.blocks[i].proj_norm, cache.blocks[i].proj_norm);
  }
}

double cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  if (static_cast<std::size_t>(logits.n) != labels.size())
    throw std::invalid_argument("cross_entropy: label count mismatch");
  const Tensor probs = softmax(logits);
  double total = 0.0;
  for (int i = 0; i < logits.n; ++i) {
    if (labels[i] < 0 || labels[i] >= logits.c)
      throw std::invalid_argument("cross_entropy: label out of range");
    total += -std::log(probs.at(i, labels[i], 0, 0));
  }
  return total / logits.n;
}

Tensor cross_entropy_backward(const Tensor& logits, const std::vector<int>& labels) {
  Tensor d = softmax(logits);
  const double inv_n = 1.0 / logits.n;
  for (int i = 0; i < logits.n; ++i) {
    d.at(i, labels[i], 0, 0) -= 1.0;
    for (int c = 0; c < logits.c; ++c) d.at(i, c, 0, 0) *= inv_n;
  }
  return d;
}

NetParams zero_like(const NetParams& params) {
  NetParams g;
  g.config = params.config;
  g.stem = Tensor(params.stem.n, params.stem.c, params.stem.h, params.stem.w);
  g.stem_norm.gamma.assign(params.stem_norm.gamma.size(), 0.0);
  g.stem_norm.beta.assign(params.stem_norm.beta.size(), 0.0);
  for (const BlockParams& b : params.blocks) {
    BlockParams gb;
    gb.conv1 = Tensor(b.conv1.n, b.conv1.c, b.conv1.h, b.conv1.w);
    gb.norm1.gamma.assign(b.norm1.gamma.size(), 0.0);
    gb.norm1.beta.assign(b.norm1.beta.size(), 0.0);
    gb.conv2 = Tensor(b.conv2.n, b.conv2.c, b.conv2.h, b.conv2.w);
    gb.norm2.gamma.assign(b.norm2.gamma.size(), 0.0);
    gb.norm2.beta.assign(b.norm2.beta.size(), 0.0);
    if (!b.proj.v.empty()) {
      gb.proj = Tensor(b.proj.n, b.proj.c, b.proj.h, b.proj.w);
      gb.proj_norm.gamma.assign(b.proj_norm.gamma.size(), 0.0);
      gb.proj_norm.beta.assign(b.proj_norm.beta.size(), 0.0);
    }
    g.blocks.push_back(std::move(gb));
  }
  g.fc.in_dim = params.fc.in_dim;
  g.fc.out_dim = params.fc.out_dim;
  g.fc.weight.assign(params.fc.weight.size(), 0.0);
  g.fc.bias.assign(params.fc.bias.size(), 0.0);
  return g;
}

NetParams backward(const NetParams& params, const ForwardCache& cache,
                   const std::vector<int>& labels, Tensor* dinput) {
  NetParams grads = zero_like(params);

  const Tensor dlogits = cross_entropy_backward(cache.logits, labels);
  Tensor dpooled(cache.pooled.n, cache.pooled.c, cache.pooled.h, cache.pooled.w);
  fc_backward(cache.pooled, params.fc, dlogits, &dpooled, &grads.fc.weight, &grads.fc.bias);

  // Undo the pooling. The pooled input is the last block's relu output,
  // which shares sum_out's shape.
  const Tensor& last_out =
      cache.blocks.empty() ? cache.stem_relu : cache.blocks.back().sum_out;
  Tensor dx(last_out.n, last_out.c, last_out.h, last_out.w);
  global_avg_pool_backward(last_out, dpooled, &dx);

  const std::vector<BlockPlan> plans = plan_blocks(params.config);
  for (std::size_t i = params.blocks.size(); i-- > 0;) {
    dx = block_backward(params.blocks[i], plans[i], cache.blocks[i], dx,
                        &grads.blocks[i]);
  }

  // Stem: relu <- norm <- conv.
  Tensor dstem_b(cache.stem_out.n, cache.stem_out.c, cache.stem_out.h, cache.stem_out.w);
  for (std::size_t i = 0; i < dstem_b.v.size(); ++i)
    dstem_b.v[i] = cache.stem_relu.v[i] > 0.0 ? dx.v[i] : 0.0;
  Tensor dstem_c(cache.stem_out.n, cache.stem_out.c, cache.stem_out.h, cache.stem_out.w);
  norm_backward(params.stem_norm, cache.stem_norm, dstem_b, &dstem_c,
                &grads.stem_norm.gamma, &grads.stem_norm.beta);
  if (dinput) *dinput = Tensor(cache.input.n, cache.input.c, cache.input.h, cache.input.w);
  conv2d_backward(cache.input, params.stem, params.config.stem_stride, 1, dstem_c,
                  dinput, &grads.stem);
  return grads;
}

}  // namespace hmadapt
