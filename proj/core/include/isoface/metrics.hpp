#pragma once

// Evaluation quantities: ROC sweep, AUC (rank and geometric), TAR at a FAR
// budget, truncated AUC over a FAR grid, McClish-standardized partial AUC,
// video-level aggregation, DFDC log-weighted precision, and genuine-impostor
// histograms. Scores follow the anomaly-score convention: higher means more
// likely manipulated.

#include <iosfwd>
#include <string>
#include <vector>

namespace isoface {

struct ScoreRecord {
  std::string video_id;
  std::size_t sequence_index = 0;
  double score = 0.0;
  int label = 0;  // 0 natural, 1 manipulated
};

struct RocPoint {
  double far = 0.0;
  double tar = 0.0;
};

// Achieved operating points swept over distinct thresholds, descending, tied
// scores grouped; starts at (0,0) and ends at (1,1). FAR and TAR are
// non-decreasing along the sweep.
struct RocCurve {
  std::vector<RocPoint> points;

  // step semantics: TAR of the largest achieved FAR <= far
  double tar_at(double far) const;
};

RocCurve roc(const std::vector<ScoreRecord>& records);

// Mann-Whitney statistic, ties counted one half.
double auc_rank(const std::vector<ScoreRecord>& records);
// Trapezoid over the achieved operating points; equals auc_rank.
double auc_geometric(const RocCurve& curve);
double auc(const std::vector<ScoreRecord>& records);

double tar_at_far(const RocCurve& curve, double far);

// Mean TAR over grid_n uniformly spaced FAR values in (0, far_cutoff].
double tauc(const RocCurve& curve, double far_cutoff, int grid_n = 1000);
// Alternative reading of the paper's F_tau: mean TAR over the achieved ROC
// vertices with FAR <= cutoff.
double tauc_vertex(const RocCurve& curve, double far_cutoff);

// 0.5 at chance, 1 at perfection; A is the step-curve integral of TAR dFAR.
double pauc_standardized(const RocCurve& curve, double far_cutoff);

// One record per video_id, score = mean of its sequence scores.
std::vector<ScoreRecord> video_level(const std::vector<ScoreRecord>& records);

struct WeightedPrecision {
  double log_wp = 0.0;  // log10 of alpha*TP / (alpha*TP + FP)
  double achieved_recall = 0.0;
  double threshold = 0.0;
  bool target_met = false;
};
WeightedPrecision log_weighted_precision(
    const std::vector<ScoreRecord>& records, double recall_target,
    double alpha = 100.0);

struct ScoreHistogram {
  double lo = 0.0, hi = 0.0;
  std::vector<double> genuine;   // natural class, normalized to sum 1
  std::vector<double> impostor;  // manipulated class, normalized to sum 1
};
ScoreHistogram histogram(const std::vector<ScoreRecord>& records,
                         std::size_t bins);
// sum over bins of min(genuine, impostor); 0 for disjoint supports
double overlap_coefficient(const ScoreHistogram& h);

void histogram_csv(const ScoreHistogram& h, std::ostream& os);
void histogram_svg(const ScoreHistogram& h, std::ostream& os);
void roc_svg(const RocCurve& curve, std::ostream& os);

// CSV format: header `video_id,sequence_index,score,label`.
void save_scores_csv(std::ostream& os, const std::vector<ScoreRecord>& records);
std::vector<ScoreRecord> load_scores_csv(std::istream& is);

}  // namespace isoface
