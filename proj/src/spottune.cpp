#include "hmadapt/spottune.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "hmadapt/checkpoint.hpp"
#include "hmadapt/errors.hpp"

namespace hmadapt {
namespace {

constexpr double kPolicyEps = 1e-5;
constexpr double kPolicyMomentum = 0.1;

Tensor init_conv_uniform(int out_ch, int in_ch, int k, Rng& rng) {
  Tensor w(out_ch, in_ch, k, k);
  const double bound = std::sqrt(6.0 / (static_cast<double>(in_ch) * k * k));
  for (double& x : w.v) x = rng.uniform(-bound, bound);
  return w;
}

template <typename Policy, typename Fn>
void visit_policy_impl(Policy& p, const Fn& fn) {
  fn("policy.conv1", p.conv1.v);
  fn("policy.norm1.gamma", p.norm1.gamma);
  fn("policy.norm1.beta", p.norm1.beta);
  fn("policy.conv2", p.conv2.v);
  fn("policy.norm2.gamma", p.norm2.gamma);
  fn("policy.norm2.beta", p.norm2.beta);
  fn("policy.fc.weight", p.fc.weight);
  fn("policy.fc.bias", p.fc.bias);
}

PolicyParams zero_policy(const PolicyParams& p) {
  PolicyParams z;
  z.conv1 = Tensor(p.conv1.n, p.conv1.c, p.conv1.h, p.conv1.w);
  z.norm1.gamma.assign(p.norm1.gamma.size(), 0.0);
  z.norm1.beta.assign(p.norm1.beta.size(), 0.0);
  z.conv2 = Tensor(p.conv2.n, p.conv2.c, p.conv2.h, p.conv2.w);
  z.norm2.gamma.assign(p.norm2.gamma.size(), 0.0);
  z.norm2.beta.assign(p.norm2.beta.size(), 0.0);
  z.fc.in_dim = p.fc.in_dim;
  z.fc.out_dim = p.fc.out_dim;
  z.fc.weight.assign(p.fc.weight.size(), 0.0);
  z.fc.bias.assign(p.fc.bias.size(), 0.0);
  return z;
}

Tensor policy_forward(const PolicyParams& p, const Tensor& batch, bool train,
                      PolicyCache* cache) {
  Tensor c1 = conv2d_forward(batch, p.conv1, 2, 1);
  NormCache n1;
  Tensor b1 = norm_forward(c1, p.norm1, train, kPolicyEps, kPolicyMomentum,
                           cache ? &n1 : nullptr);
  Tensor r1 = relu_forward(b1);
  Tensor c2 = conv2d_forward(r1, p.conv2, 2, 1);
  NormCache n2;
  Tensor b2 = norm_forward(c2, p.norm2, train, kPolicyEps, kPolicyMomentum,
                           cache ? &n2 : nullptr);
  Tensor r2 = relu_forward(b2);
  Tensor pooled = global_avg_pool(r2);
  Tensor logits = fc_forward(pooled, p.fc);
  if (cache) {
    cache->conv1_out = std::move(c1);
    cache->norm1 = std::move(n1);
    cache->relu1 = std::move(r1);
    cache->conv2_out = std::move(c2);
    cache->norm2 = std::move(n2);
    cache->relu2 = std::move(r2);
    cache->pooled = std::move(pooled);
    cache->logits = logits;
  }
  return logits;
}

void policy_backward(const PolicyParams& p, const Tensor& batch, const PolicyCache& cache,
                     const Tensor& dlogits, PolicyParams* gp) {
  Tensor dpooled(cache.pooled.n, cache.pooled.c, 1, 1);
  fc_backward(cache.pooled, p.fc, dlogits, &dpooled, &gp->fc.weight, &gp->fc.bias);
  Tensor dr2(cache.relu2.n, cache.relu2.c, cache.relu2.h, cache.relu2.w);
  global_avg_pool_backward(cache.relu2, dpooled, &dr2);
  Tensor db2(dr2.n, dr2.c, dr2.h, dr2.w);
  for (std::size_t i = 0; i < db2.v.size(); ++i)
    db2.v[i] = cache.relu2.v[i] > 0.0 ? dr2.v[i] : 0.0;
  Tensor dc2(cache.conv2_out.n, cache.conv2_out.c, cache.conv2_out.h, cache.conv2_out.w);
  norm_backward(p.norm2, cache.norm2, db2, &dc2, &gp->norm2.gamma, &gp->norm2.beta);
  Tensor dr1(cache.relu1.n, cache.relu1.c, cache.relu1.h, cache.relu1.w);
  conv2d_backward(cache.relu1, p.conv2, 2, 1, dc2, &dr1, &gp->conv2);
  Tensor db1(dr1.n, dr1.c, dr1.h, dr1.w);
  for (std::size_t i = 0; i < db1.v.size(); ++i)
    db1.v[i] = cache.relu1.v[i] > 0.0 ? dr1.v[i] : 0.0;
  Tensor dc1(cache.conv1_out.n, cache.conv1_out.c, cache.conv1_out.h, cache.conv1_out.w);
  norm_backward(p.norm1, cache.norm1, db1, &dc1, &gp->norm1.gamma, &gp->norm1.beta);
  conv2d_backward(batch, p.conv1, 2, 1, dc1, nullptr, &gp->conv1);
}

}  // namespace

PolicyParams init_policy(int block_count, Rng& rng) {
  if (block_count < 1) throw std::invalid_argument("policy: block_count must be >= 1");
  PolicyParams p;
  p.conv1 = init_conv_uniform(4, 1, 3, rng);
  p.norm1 = make_norm(4);
  p.conv2 = init_conv_uniform(8, 4, 3, rng);
  p.norm2 = make_norm(8);
  p.fc.in_dim = 8;
  p.fc.out_dim = 2 * block_count;
  p.fc.weight.resize(static_cast<std::size_t>(8) * p.fc.out_dim);
  const double bound = std::sqrt(6.0 / 8.0);
  for (double& x : p.fc.weight) x = rng.uniform(-bound, bound);
  p.fc.bias.assign(p.fc.out_dim, 0.0);
  return p;
}

std::size_t policy_trainable_count(const PolicyParams& p) {
  std::size_t total = 0;
  visit_policy_impl(p, [&](const std::string&, const std::vector<double>& v) {
    total += v.size();
  });
  return total;
}

SpotTuneNet make_spottune(const NetParams& base, double temperature, Rng& rng) {
  if (!(temperature > 0.0))
    throw std::invalid_argument("spottune: temperature must be positive");
  SpotTuneNet net;
  net.frozen = base;
  net.tuned = base;  // exact clone as the warm start
  net.policy = init_policy(static_cast<int>(base.blocks.size()), rng);
  net.temperature = temperature;
  return net;
}

std::vector<double> gumbel_noise(int n, int blocks, Rng& rng) {
  std::vector<double> g(static_cast<std::size_t>(n) * blocks * 2);
  for (double& x : g) {
    double u;
    do {
      u = rng.uniform01();
    } while (u <= 0.0);
    x = -std::log(-std::log(u));
  }
  return g;
}

Tensor spottune_forward(const SpotTuneNet& net, const Tensor& batch, RoutingMode mode,
                        const RoutingControl& control, const std::vector<double>* noise,
                        SpotTuneCache* cache) {
  const NetConfig& cfg = net.frozen.config;
  const int B = static_cast<int>(net.frozen.blocks.size());
  const int N = batch.n;
  const bool train = mode != RoutingMode::eval;
  if (!control.forced.empty() && static_cast<int>(control.forced.size()) != B)
    throw std::invalid_argument("spottune: forced routing size mismatch");

  // Policy decisions from the raw input patch.
  PolicyCache pcache;
  const Tensor plogits =
      policy_forward(net.policy, batch, train, cache ? &pcache : nullptr);
  if (plogits.c != 2 * B) throw std::invalid_argument("spottune: policy head mismatch");

  bool needs_noise = false;
  if (train) {
    for (int b = 0; b < B; ++b)
      if (control.forced.empty() || control.forced[b] < 0) needs_noise = true;
  }
  if (needs_noise && (!noise || noise->size() != static_cast<std::size_t>(N) * B * 2))
    throw std::invalid_argument("spottune: train-mode routing requires N*B*2 noise values");

  // Tuned stem (the trainable copy supplies stem and classifier head).
  Tensor stem_c = conv2d_forward(batch, net.tuned.stem, cfg.stem_stride, 1);
  NormCache stem_n;
  Tensor x = relu_forward(norm_forward(stem_c, net.tuned.stem_norm, train, cfg.norm_eps,
                                       cfg.norm_momentum, cache ? &stem_n : nullptr));
  if (cache) {
    cache->mode = mode;
    cache->input = batch;
    cache->policy = std::move(pcache);
    cache->stem_out = std::move(stem_c);
    cache->stem_norm = std::move(stem_n);
    cache->stem_relu = x;
    cache->blocks.clear();
  }

  const std::vector<BlockPlan> plans = plan_blocks(cfg);
  for (int b = 0; b < B; ++b) {
    SpotTuneBlockCache bc;
    bc.r.resize(N);
    bc.r_soft.resize(N);
    bc.routed.assign(N, false);
    const int forced = control.forced.empty() ? -1 : control.forced[b];
    for (int n = 0; n < N; ++n) {
      if (forced >= 0) {
        bc.r[n] = forced;
        bc.r_soft[n] = forced;
        continue;
      }
      const double l0 = plogits.at(n, 2 * b, 0, 0);      // reuse (frozen)
      const double l1 = plogits.at(n, 2 * b + 1, 0, 0);  // fine-tune (tuned)
      if (mode == RoutingMode::eval) {
        bc.r[n] = l1 > l0 ? 1.0 : 0.0;
        bc.r_soft[n] = bc.r[n];
        continue;
      }
      bc.routed[n] = true;
      const std::size_t base = (static_cast<std::size_t>(n) * B + b) * 2;
      const double a0 = (l0 + (*noise)[base]) / net.temperature;
      const double a1 = (l1 + (*noise)[base + 1]) / net.temperature;
      const double m = std::max(a0, a1);
      const double e0 = std::exp(a0 - m);
      const double e1 = std::exp(a1 - m);
      bc.r_soft[n] = e1 / (e0 + e1);
      bc.r[n] = mode == RoutingMode::train ? (a1 > a0 ? 1.0 : 0.0) : bc.r_soft[n];
    }

    // Frozen path always normalizes with its stored running statistics.
    Tensor fout = block_forward(net.frozen.blocks[b], plans[b], x, /*train=*/false,
                                cfg.norm_eps, cfg.norm_momentum,
                                cache ? &bc.frozen : nullptr);
    Tensor tout = block_forward(net.tuned.blocks[b], plans[b], x, train, cfg.norm_eps,
                                cfg.norm_momentum, cache ? &bc.tuned : nullptr);

    Tensor mixed(fout.n, fout.c, fout.h, fout.w);
    const std::size_t plane = static_cast<std::size_t>(fout.c) * fout.h * fout.w;
    for (int n = 0; n < N; ++n) {
      const std::size_t base = static_cast<std::size_t>(n) * plane;
      const double r = bc.r[n];
      if (r == 0.0) {
        std::copy_n(fout.v.begin() + base, plane, mixed.v.begin() + base);
      } else if (r == 1.0) {
        std::copy_n(tout.v.begin() + base, plane, mixed.v.begin() + base);
      } else {
        for (std::size_t i = 0; i < plane; ++i)
          mixed.v[base + i] = r * tout.v[base + i] + (1.0 - r) * fout.v[base + i];
      }
    }
    if (cache) {
      bc.frozen_out = std::move(fout);
      bc.tuned_out = std::move(tout);
      cache->blocks.push_back(std::move(bc));
    }
    x = std::move(mixed);
  }

  Tensor pooled = global_avg_pool(x);
  Tensor logits = fc_forward(pooled, net.tuned.fc);
  if (cache) {
    cache->pooled = std::move(pooled);
    cache->logits = logits;
  }
  return logits;
}

SpotTuneGrads spottune_backward(const SpotTuneNet& net, const SpotTuneCache& cache,
                                const std::vector<int>& labels) {
  if (cache.mode == RoutingMode::eval)
    throw std::invalid_argument("spottune_backward: eval-mode cache has no gradient path");
  const NetConfig& cfg = net.frozen.config;
  const int B = static_cast<int>(net.frozen.blocks.size());
  const int N = cache.input.n;

  SpotTuneGrads grads;
  grads.tuned = zero_like(net.tuned);
  grads.policy = zero_policy(net.policy);

  const Tensor dlogits = cross_entropy_backward(cache.logits, labels);
  Tensor dpooled(cache.pooled.n, cache.pooled.c, 1, 1);
  fc_backward(cache.pooled, net.tuned.fc, dlogits, &dpooled, &grads.tuned.fc.weight,
              &grads.tuned.fc.bias);

  const Tensor& last = cache.blocks.back().tuned_out;
  Tensor dx(last.n, last.c, last.h, last.w);
  global_avg_pool_backward(last, dpooled, &dx);

  Tensor dplogits(N, 2 * B, 1, 1);
  const std::vector<BlockPlan> plans = plan_blocks(cfg);
  for (int b = B - 1; b >= 0; --b) {
    const SpotTuneBlockCache& bc = cache.blocks[b];
    const std::size_t plane = static_cast<std::size_t>(dx.c) * dx.h * dx.w;

    Tensor dyT(dx.n, dx.c, dx.h, dx.w), dyF(dx.n, dx.c, dx.h, dx.w);
    for (int n = 0; n < N; ++n) {
      const std::size_t base = static_cast<std::size_t>(n) * plane;
      const double r = bc.r[n];
      double dr = 0.0;
      for (std::size_t i = 0; i < plane; ++i) {
        const double g = dx.v[base + i];
        dyT.v[base + i] = r * g;
        dyF.v[base + i] = (1.0 - r) * g;
        dr += g * (bc.tuned_out.v[base + i] - bc.frozen_out.v[base + i]);
      }
      if (bc.routed[n]) {
        // Straight-through / relaxed: route the mixing gradient into the
        // pairwise softmax at the configured temperature.
        const double s = bc.r_soft[n];
        const double ds = dr * s * (1.0 - s) / net.temperature;
        dplogits.at(n, 2 * b + 1, 0, 0) += ds;
        dplogits.at(n, 2 * b, 0, 0) -= ds;
      }
    }
    Tensor dxT = block_backward(net.tuned.blocks[b], plans[b], bc.tuned, dyT,
                                &grads.tuned.blocks[b]);
    Tensor dxF =
        block_backward(net.frozen.blocks[b], plans[b], bc.frozen, dyF, nullptr);
    dx = std::move(dxT);
    for (std::size_t i = 0; i < dx.v.size(); ++i) dx.v[i] += dxF.v[i];
  }

  // Tuned stem.
  Tensor dstem_b(cache.stem_out.n, cache.stem_out.c, cache.stem_out.h, cache.stem_out.w);
  for (std::size_t i = 0; i < dstem_b.v.size(); ++i)
    dstem_b.v[i] = cache.stem_relu.v[i] > 0.0 ? dx.v[i] : 0.0;
  Tensor dstem_c(cache.stem_out.n, cache.stem_out.c, cache.stem_out.h, cache.stem_out.w);
  norm_backward(net.tuned.stem_norm, cache.stem_norm, dstem_b, &dstem_c,
                &grads.tuned.stem_norm.gamma, &grads.tuned.stem_norm.beta);
  conv2d_backward(cache.input, net.tuned.stem, cfg.stem_stride, 1, dstem_c, nullptr,
                  &grads.tuned.stem);

  policy_backward(net.policy, cache.input, cache.policy, dplogits, &grads.policy);
  return grads;
}

std::vector<double> spottune_score_batch(const SpotTuneNet& net, const Tensor& batch) {
  const Tensor logits = spottune_forward(net, batch, RoutingMode::eval,
                                         RoutingControl::none(), nullptr, nullptr);
  const Tensor probs = softmax(logits);
  std::vector<double> scores(batch.n);
  for (int i = 0; i < batch.n; ++i) scores[i] = probs.at(i, 1, 0, 0);
  return scores;
}

namespace {

void commit_spottune_stats(SpotTuneNet& net, const SpotTuneCache& cache) {
  auto commit = [](NormParams& p, const NormCache& c) {
    p.run_mean = c.new_run_mean;
    p.run_var = c.new_run_var;
  };
  commit(net.tuned.stem_norm, cache.stem_norm);
  const std::vector<BlockPlan> plans = plan_blocks(net.tuned.config);
  for (std::size_t i = 0; i < net.tuned.blocks.size(); ++i) {
    commit(net.tuned.blocks[i].norm1, cache.blocks[i].tuned.norm1);
    commit(net.tuned.blocks[i].norm2, cache.blocks[i].tuned.norm2);
    if (plans[i].has_proj)
      commit(net.tuned.blocks[i].proj_norm, cache.blocks[i].tuned.proj_norm);
  }
  commit(net.policy.norm1, cache.policy.norm1);
  commit(net.policy.norm2, cache.policy.norm2);
}

double spottune_val_auc(const SpotTuneNet& net, PatchSource& data) {
  std::vector<int> labels;
  const Tensor batch = data.val_batch(&labels);
  if (batch.n == 0) throw DataError("spottune: empty validation set");
  ScoredSet s;
  s.scores = spottune_score_batch(net, batch);
  s.labels = labels;
  return roc_auc(s);
}

}  // namespace

SpotTuneTrainResult spottune_train(const SpotTuneNet& net, PatchSource& data,
                                   const TrainOptions& opt) {
  opt.validate();
  Rng rng(opt.seed);
  const int B = static_cast<int>(net.frozen.blocks.size());

  SpotTuneTrainResult result;
  result.net = net;
  result.best_epoch = 0;
  result.best_val_auc = spottune_val_auc(net, data);

  SpotTuneNet current = net;
  AdamState adam;
  adam.cfg = opt.adam;
  adam.cfg.validate();
  const std::size_t tuned_count = trainable_count(current.tuned);
  adam.m.assign(tuned_count + policy_trainable_count(current.policy), 0.0);
  adam.v.assign(adam.m.size(), 0.0);

  for (int epoch = 1; epoch <= opt.epochs; ++epoch) {
    double loss_sum = 0.0;
    int steps = 0;
    int remaining = opt.epoch_size;
    while (remaining > 0) {
      const int bs = std::min(opt.batch_size, remaining);
      remaining -= bs;
      std::vector<int> labels;
      const Tensor batch = data.draw_train(bs, rng, &labels);
      const std::vector<double> noise = gumbel_noise(bs, B, rng);
      SpotTuneCache cache;
      const Tensor logits = spottune_forward(current, batch, RoutingMode::train,
                                             RoutingControl::none(), &noise, &cache);
      loss_sum += cross_entropy(logits, labels);
      ++steps;
      const SpotTuneGrads grads = spottune_backward(current, cache, labels);

      ++adam.t;
      std::size_t offset = 0;
      std::vector<const std::vector<double>*> gslices;
      visit_trainable(grads.tuned, [&](const std::string&, const std::vector<double>& g) {
        gslices.push_back(&g);
      });
      std::size_t slice = 0;
      visit_trainable(current.tuned, [&](const std::string&, std::vector<double>& w) {
        const std::vector<double>& g = *gslices[slice++];
        adam_update_span(adam.cfg, adam.t, std::span<double>(w),
                         std::span<const double>(g),
                         std::span<double>(adam.m).subspan(offset, w.size()),
                         std::span<double>(adam.v).subspan(offset, w.size()));
        offset += w.size();
      });
      gslices.clear();
      slice = 0;
      visit_policy_impl(grads.policy,
                        [&](const std::string&, const std::vector<double>& g) {
                          gslices.push_back(&g);
                        });
      visit_policy_impl(current.policy, [&](const std::string&, std::vector<double>& w) {
        const std::vector<double>& g = *gslices[slice++];
        adam_update_span(adam.cfg, adam.t, std::span<double>(w),
                         std::span<const double>(g),
                         std::span<double>(adam.m).subspan(offset, w.size()),
                         std::span<double>(adam.v).subspan(offset, w.size()));
        offset += w.size();
      });
      commit_spottune_stats(current, cache);
    }
    result.history.train_loss.push_back(loss_sum / steps);

    const double auc = spottune_val_auc(current, data);
    result.history.val_auc.push_back(auc);
    if (auc > result.best_val_auc) {
      result.best_val_auc = auc;
      result.best_epoch = epoch;
      result.net = current;
    }
  }
  return result;
}

PolicyStats policy_stats(const SpotTuneNet& net, const Tensor& batch,
                         const RoutingControl& control) {
  if (batch.n == 0) throw DataError("policy_stats: empty dataset");
  SpotTuneCache cache;
  spottune_forward(net, batch, RoutingMode::eval, control, nullptr, &cache);
  PolicyStats stats;
  stats.sample_count = batch.n;
  for (const SpotTuneBlockCache& bc : cache.blocks) {
    double sum = 0.0;
    for (double r : bc.r) sum += r;
    stats.finetune_probability.push_back(sum / static_cast<double>(batch.n));
  }
  return stats;
}

std::string policy_stats_to_csv(const PolicyStats& stats) {
  std::ostringstream out;
  out << "block_index,finetune_probability\n";
  out.precision(17);
  for (std::size_t b = 0; b < stats.finetune_probability.size(); ++b)
    out << b << "," << stats.finetune_probability[b] << "\n";
  return out.str();
}

void save_spottune(const std::filesystem::path& path, const SpotTuneNet& net) {
  nlohmann::json cfg;
  cfg["net"] = nlohmann::json::parse(net_config_to_json(net.frozen.config));
  cfg["temperature"] = net.temperature;
  std::vector<NamedArray> arrays;
  visit_all(net.frozen, [&](const std::string& name, const std::vector<double>& v) {
    arrays.push_back({"frozen/" + name, v});
  });
  visit_all(net.tuned, [&](const std::string& name, const std::vector<double>& v) {
    arrays.push_back({"tuned/" + name, v});
  });
  visit_policy_impl(net.policy, [&](const std::string& name, const std::vector<double>& v) {
    arrays.push_back({name, v});
  });
  arrays.push_back({"policy.norm1.run_mean", net.policy.norm1.run_mean});
  arrays.push_back({"policy.norm1.run_var", net.policy.norm1.run_var});
  arrays.push_back({"policy.norm2.run_mean", net.policy.norm2.run_mean});
  arrays.push_back({"policy.norm2.run_var", net.policy.norm2.run_var});
  write_checkpoint_file(path, "spottune", cfg.dump(), arrays);
}

SpotTuneNet load_spottune(const std::filesystem::path& path) {
  const CheckpointContents c = read_checkpoint_file(path);
  if (c.kind != "spottune")
    throw DataError("expected a spottune checkpoint, found kind '" + c.kind + "'");
  const nlohmann::json cfg = nlohmann::json::parse(c.config_json);
  const NetConfig net_cfg = net_config_from_json(cfg.at("net").dump());

  std::map<std::string, const std::vector<double>*> by_name;
  for (const NamedArray& a : c.arrays) by_name[a.name] = &a.data;
  auto fill = [&](const std::string& name, std::vector<double>& v) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw DataError("checkpoint missing array: " + name);
    if (it->second->size() != v.size())
      throw DataError("checkpoint array size mismatch: " + name);
    v = *it->second;
  };

  SpotTuneNet net;
  net.temperature = cfg.at("temperature").get<double>();
  net.frozen = make_net_shell(net_cfg);
  net.tuned = make_net_shell(net_cfg);
  visit_all(net.frozen, [&](const std::string& name, std::vector<double>& v) {
    fill("frozen/" + name, v);
  });
  visit_all(net.tuned, [&](const std::string& name, std::vector<double>& v) {
    fill("tuned/" + name, v);
  });
  Rng dummy(0);
  net.policy = init_policy(static_cast<int>(net.frozen.blocks.size()), dummy);
  visit_policy_impl(net.policy, fill);
  fill("policy.norm1.run_mean", net.policy.norm1.run_mean);
  fill("policy.norm1.run_var", net.policy.norm1.run_var);
  fill("policy.norm2.run_mean", net.policy.norm2.run_mean);
  fill("policy.norm2.run_var", net.policy.norm2.run_var);
  return net;
}

}  // namespace hmadapt
