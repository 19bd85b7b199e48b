#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace hmadapt {

struct ScoredSet {
  std::vector<double> scores;  // higher means more positive
  std::vector<int> labels;     // 0 or 1

  void validate() const;  // sizes match, labels binary, both classes present
};

// Mann-Whitney AUC with midrank tie handling. The rank bookkeeping is exact
// integer arithmetic, so the result equals the pairwise
// (wins + 0.5*ties) / (P*N) statistic bit for bit.
double roc_auc(const ScoredSet& s);

struct RocPoint {
  double fpr = 0.0, tpr = 0.0;
  double threshold = 0.0;  // score cut producing this point; +inf at (0,0)
};

// Curve from threshold +inf downward; ties collapse into single steps.
// Starts at (0,0) and ends at (1,1).
std::vector<RocPoint> roc_curve(const ScoredSet& s);

double trapezoid_area(const std::vector<RocPoint>& curve);

struct EvalReport {
  std::vector<double> per_seed_auc;
  double mean_auc = 0.0;
  double std_auc = 0.0;  // population standard deviation across seeds
  std::vector<RocPoint> curve;  // from the first seed
  std::string mode;    // test_only / last_layer / spottune / scratch
  std::string domain;  // which test set was scored
  bool hist_match = false;
};

// Runs `evaluate` once per seed and aggregates.
EvalReport seeded_eval(const std::vector<std::uint64_t>& seeds,
                       const std::function<ScoredSet(std::uint64_t)>& evaluate);

std::string eval_report_to_json(const EvalReport& r);
std::string roc_curve_to_csv(const std::vector<RocPoint>& curve);

}  // namespace hmadapt
