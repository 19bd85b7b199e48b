#include "hmadapt/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace hmadapt {

void AdamConfig::validate() const {
  if (!(lr > 0.0)) throw std::invalid_argument("adam: lr must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw std::invalid_argument("adam: beta1 out of range");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw std::invalid_argument("adam: beta2 out of range");
  if (!(eps > 0.0)) throw std::invalid_argument("adam: eps must be positive");
  if (weight_decay < 0.0) throw std::invalid_argument("adam: weight_decay must be >= 0");
}

void adam_update_span(const AdamConfig& cfg, std::int64_t t, std::span<double> w,
                      std::span<const double> g, std::span<double> m, std::span<double> v) {
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double grad = g[i] + cfg.weight_decay * w[i];
    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grad;
    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grad * grad;
    const double mhat = m[i] / bc1;
    const double vhat = v[i] / bc2;
    w[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
}

AdamState make_adam(const AdamConfig& cfg, const NetParams& params) {
  cfg.validate();
  AdamState s;
  s.cfg = cfg;
  s.m.assign(trainable_count(params), 0.0);
  s.v.assign(s.m.size(), 0.0);
  return s;
}

namespace {

void step_impl(AdamState& state, NetParams& params, const NetParams& grads,
               const std::function<bool(const std::string&)>* keep) {
  ++state.t;
  // Walk params and grads in lockstep; visit order is identical because the
  // two share a structure.
  std::vector<const std::vector<double>*> gslices;
  visit_trainable(grads, [&](const std::string&, const std::vector<double>& g) {
    gslices.push_back(&g);
  });
  std::size_t slice = 0, offset = 0;
  visit_trainable(params, [&](const std::string& name, std::vector<double>& w) {
    const std::vector<double>& g = *gslices[slice++];
    if (g.size() != w.size()) throw std::invalid_argument("adam: gradient shape mismatch");
    if (offset + w.size() > state.m.size())
      throw std::invalid_argument("adam: state too small for parameters");
    if (!keep || (*keep)(name)) {
      adam_update_span(state.cfg, state.t,
                       std::span<double>(w),
                       std::span<const double>(g),
                       std::span<double>(state.m).subspan(offset, w.size()),
                       std::span<double>(state.v).subspan(offset, w.size()));
    }
    offset += w.size();
  });
  if (offset != state.m.size())
    throw std::invalid_argument("adam: state size does not match parameters");
}

}  // namespace

void adam_step(AdamState& state, NetParams& params, const NetParams& grads) {
  step_impl(state, params, grads, nullptr);
}

void adam_step_filtered(AdamState& state, NetParams& params, const NetParams& grads,
                        const std::function<bool(const std::string&)>& keep) {
  step_impl(state, params, grads, &keep);
}

}  // namespace hmadapt
