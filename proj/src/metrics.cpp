#include "hmadapt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace hmadapt {

void ScoredSet::validate() const {
  if (scores.size() != labels.size())
    throw std::invalid_argument("scored set: size mismatch");
  if (scores.empty()) throw std::invalid_argument("scored set: empty");
  bool has_pos = false, has_neg = false;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == 1)
      has_pos = true;
    else if (labels[i] == 0)
      has_neg = true;
    else
      throw std::invalid_argument("scored set: labels must be 0 or 1");
    if (std::isnan(scores[i])) throw std::invalid_argument("scored set: NaN score");
  }
  if (!has_pos || !has_neg)
    throw std::invalid_argument("scored set: need both classes");
}

double roc_auc(const ScoredSet& s) {
  s.validate();
  const std::size_t n = s.scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return s.scores[a] < s.scores[b];
  });

  // Twice the midrank of each element stays integral over tie groups:
  // group spanning 1-based ranks [lo, hi] has 2*midrank = lo + hi.
  std::int64_t pos_rank2_sum = 0;
  std::int64_t positives = 0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && s.scores[order[j + 1]] == s.scores[order[i]]) ++j;
    const std::int64_t twice_midrank =
        static_cast<std::int64_t>(i + 1) + static_cast<std::int64_t>(j + 1);
    for (std::size_t k = i; k <= j; ++k) {
      if (s.labels[order[k]] == 1) {
        pos_rank2_sum += twice_midrank;
        ++positives;
      }
    }
    i = j + 1;
  }
  const std::int64_t negatives = static_cast<std::int64_t>(n) - positives;
  // 2*U = sum(2*midrank over positives) - P*(P+1)
  const std::int64_t twice_u = pos_rank2_sum - positives * (positives + 1);
  return static_cast<double>(twice_u) / (2.0 * static_cast<double>(positives) *
                                         static_cast<double>(negatives));
}

std::vector<RocPoint> roc_curve(const ScoredSet& s) {
  s.validate();
  const std::size_t n = s.scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return s.scores[a] > s.scores[b];
  });
  std::int64_t total_pos = 0;
  for (int l : s.labels) total_pos += l;
  const std::int64_t total_neg = static_cast<std::int64_t>(n) - total_pos;

  std::vector<RocPoint> curve;
  curve.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  std::int64_t tp = 0, fp = 0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;  // one step per distinct score
    while (j + 1 < n && s.scores[order[j + 1]] == s.scores[order[i]]) ++j;
    for (std::size_t k = i; k <= j; ++k) {
      if (s.labels[order[k]] == 1)
        ++tp;
      else
        ++fp;
    }
    curve.push_back({static_cast<double>(fp) / static_cast<double>(total_neg),
                     static_cast<double>(tp) / static_cast<double>(total_pos),
                     s.scores[order[i]]});
    i = j + 1;
  }
  return curve;
}

double trapezoid_area(const std::vector<RocPoint>& curve) {
  double area = 0.0;
  for (std::size_t i = 1; i < curve.size(); ++i)
    area += (curve[i].fpr - curve[i - 1].fpr) * (curve[i].tpr + curve[i - 1].tpr) * 0.5;
  return area;
}

EvalReport seeded_eval(const std::vector<std::uint64_t>& seeds,
                       const std::function<ScoredSet(std::uint64_t)>& evaluate) {
  if (seeds.empty()) throw std::invalid_argument("seeded_eval: no seeds");
  EvalReport r;
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    const ScoredSet s = evaluate(seeds[i]);
    r.per_seed_auc.push_back(roc_auc(s));
    if (i == 0) r.curve = roc_curve(s);
  }
  double sum = 0.0;
  for (double a : r.per_seed_auc) sum += a;
  r.mean_auc = sum / static_cast<double>(r.per_seed_auc.size());
  double sq = 0.0;
  for (double a : r.per_seed_auc) sq += (a - r.mean_auc) * (a - r.mean_auc);
  r.std_auc = std::sqrt(sq / static_cast<double>(r.per_seed_auc.size()));
  return r;
}

std::string eval_report_to_json(const EvalReport& r) {
  nlohmann::json j;
  j["mode"] = r.mode;
  j["domain"] = r.domain;
  j["hist_match"] = r.hist_match;
  j["per_seed_auc"] = r.per_seed_auc;
  j["mean_auc"] = r.mean_auc;
  j["std_auc"] = r.std_auc;
  return j.dump(2) + "\n";
}

std::string roc_curve_to_csv(const std::vector<RocPoint>& curve) {
  std::ostringstream out;
  out << "fpr,tpr,threshold\n";
  out.precision(17);
  for (const RocPoint& p : curve)
    out << p.fpr << "," << p.tpr << "," << p.threshold << "\n";
  return out.str();
}

}  // namespace hmadapt
