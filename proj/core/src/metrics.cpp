#include "isoface/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace isoface {

namespace {

void split_counts(const std::vector<ScoreRecord>& records, std::size_t& neg,
                  std::size_t& pos) {
  neg = pos = 0;
  for (const auto& r : records) {
    if (!std::isfinite(r.score))
      throw std::invalid_argument("non-finite score for " + r.video_id);
    if (r.label != 0 && r.label != 1)
      throw std::invalid_argument("label must be 0 or 1");
    (r.label == 0 ? neg : pos)++;
  }
  if (neg == 0 || pos == 0)
    throw std::invalid_argument("both classes required for ROC analysis");
}

}  // namespace

double RocCurve::tar_at(double far) const {
  double best = 0.0;
  for (const auto& p : points) {
    if (p.far > far) break;
    best = p.tar;  // TAR is non-decreasing along the sweep
  }
  return best;
}

RocCurve roc(const std::vector<ScoreRecord>& records) {
  std::size_t neg, pos;
  split_counts(records, neg, pos);

  // descending by score; predict manipulated when score >= threshold
  std::vector<const ScoreRecord*> sorted;
  sorted.reserve(records.size());
  for (const auto& r : records) sorted.push_back(&r);
  std::sort(sorted.begin(), sorted.end(),
            [](const ScoreRecord* a, const ScoreRecord* b) {
              return a->score > b->score;
            });

  RocCurve curve;
  curve.points.push_back({0.0, 0.0});
  std::size_t fp = 0, tp = 0, i = 0;
  while (i < sorted.size()) {
    const double v = sorted[i]->score;
    while (i < sorted.size() && sorted[i]->score == v) {
      (sorted[i]->label == 0 ? fp : tp)++;
      ++i;
    }
    curve.points.push_back(
        {double(fp) / double(neg), double(tp) / double(pos)});
  }
  return curve;
}

double auc_rank(const std::vector<ScoreRecord>& records) {
  std::size_t neg, pos;
  split_counts(records, neg, pos);
  double wins = 0.0;
  for (const auto& m : records) {
    if (m.label != 1) continue;
    for (const auto& n : records) {
      if (n.label != 0) continue;
      if (m.score > n.score)
        wins += 1.0;
      else if (m.score == n.score)
        wins += 0.5;
    }
  }
  return wins / (double(neg) * double(pos));
}

double auc_geometric(const RocCurve& curve) {
  double area = 0.0;
  for (std::size_t k = 1; k < curve.points.size(); ++k) {
    const auto& a = curve.points[k - 1];
    const auto& b = curve.points[k];
    area += (b.far - a.far) * 0.5 * (a.tar + b.tar);
  }
  return area;
}

double auc(const std::vector<ScoreRecord>& records) {
  return auc_rank(records);
}

double tar_at_far(const RocCurve& curve, double far) {
  if (!(far > 0.0 && far <= 1.0))
    throw std::invalid_argument("FAR budget must lie in (0,1]");
  return curve.tar_at(far);
}

double tauc(const RocCurve& curve, double far_cutoff, int grid_n) {
  if (!(far_cutoff > 0.0 && far_cutoff <= 1.0))
    throw std::invalid_argument("FAR cutoff must lie in (0,1]");
  if (grid_n < 1) throw std::invalid_argument("grid_n must be positive");
  double acc = 0.0;
  for (int i = 1; i <= grid_n; ++i)
    acc += curve.tar_at(far_cutoff * double(i) / double(grid_n));
  return acc / double(grid_n);
}

double tauc_vertex(const RocCurve& curve, double far_cutoff) {
  if (!(far_cutoff > 0.0 && far_cutoff <= 1.0))
    throw std::invalid_argument("FAR cutoff must lie in (0,1]");
  double acc = 0.0;
  std::size_t n = 0;
  for (const auto& p : curve.points) {
    if (p.far > far_cutoff) break;
    acc += p.tar;
    ++n;
  }
  return n == 0 ? 0.0 : acc / double(n);
}

double pauc_standardized(const RocCurve& curve, double f) {
  if (!(f > 0.0 && f <= 1.0))
    throw std::invalid_argument("FAR cutoff must lie in (0,1]");
  // step integral of TAR dFAR up to f
  double area = 0.0;
  for (std::size_t k = 0; k < curve.points.size(); ++k) {
    const double x0 = curve.points[k].far;
    if (x0 >= f) break;
    const double x1 =
        k + 1 < curve.points.size() ? std::min(curve.points[k + 1].far, f) : f;
    area += curve.points[k].tar * (x1 - x0);
  }
  const double chance = f * f / 2.0;
  return 0.5 * (1.0 + (area - chance) / (f - chance));
}

std::vector<ScoreRecord> video_level(const std::vector<ScoreRecord>& records) {
  if (records.empty()) throw std::invalid_argument("no records to aggregate");
  std::map<std::string, std::pair<double, std::size_t>> acc;  // sum, count
  std::map<std::string, int> labels;
  for (const auto& r : records) {
    auto [it, fresh] = labels.emplace(r.video_id, r.label);
    if (!fresh && it->second != r.label)
      throw std::invalid_argument("conflicting labels within video " +
                                  r.video_id);
    auto& a = acc[r.video_id];
    a.first += r.score;
    a.second += 1;
  }
  std::vector<ScoreRecord> out;
  for (const auto& [id, a] : acc)
    out.push_back({id, 0, a.first / double(a.second), labels[id]});
  return out;
}

WeightedPrecision log_weighted_precision(
    const std::vector<ScoreRecord>& records, double recall_target,
    double alpha) {
  if (!(recall_target > 0.0 && recall_target <= 1.0))
    throw std::invalid_argument("recall target must lie in (0,1]");
  if (!(alpha > 0.0)) throw std::invalid_argument("alpha must be positive");
  std::size_t neg, pos;
  split_counts(records, neg, pos);

  std::vector<const ScoreRecord*> sorted;
  for (const auto& r : records) sorted.push_back(&r);
  std::sort(sorted.begin(), sorted.end(),
            [](const ScoreRecord* a, const ScoreRecord* b) {
              return a->score > b->score;
            });

  WeightedPrecision best;
  bool found = false;
  WeightedPrecision fallback;  // max-recall point if the target is unreachable
  fallback.achieved_recall = -1.0;
  std::size_t tp = 0, fp = 0, i = 0;
  while (i < sorted.size()) {
    const double v = sorted[i]->score;
    while (i < sorted.size() && sorted[i]->score == v) {
      (sorted[i]->label == 1 ? tp : fp)++;
      ++i;
    }
    const double recall = double(tp) / double(pos);
    const double wp = alpha * double(tp) / (alpha * double(tp) + double(fp));
    const WeightedPrecision cand{std::log10(wp), recall, v, true};
    // the first threshold reaching a recall level has the fewest FPs there
    if (recall > fallback.achieved_recall) fallback = cand;
    if (recall >= recall_target && (!found || cand.log_wp > best.log_wp)) {
      best = cand;
      found = true;
    }
  }
  if (!found) {
    fallback.target_met = false;
    return fallback;
  }
  return best;
}

ScoreHistogram histogram(const std::vector<ScoreRecord>& records,
                         std::size_t bins) {
  if (records.empty() || bins == 0)
    throw std::invalid_argument("histogram needs records and bins");
  ScoreHistogram h;
  h.lo = h.hi = records.front().score;
  for (const auto& r : records) {
    h.lo = std::min(h.lo, r.score);
    h.hi = std::max(h.hi, r.score);
  }
  if (h.hi == h.lo) bins = 1;
  h.genuine.assign(bins, 0.0);
  h.impostor.assign(bins, 0.0);
  double gn = 0, in = 0;
  for (const auto& r : records) {
    std::size_t b = 0;
    if (h.hi > h.lo) {
      b = std::size_t((r.score - h.lo) / (h.hi - h.lo) * double(bins));
      if (b >= bins) b = bins - 1;
    }
    if (r.label == 0) {
      h.genuine[b] += 1.0;
      gn += 1.0;
    } else {
      h.impostor[b] += 1.0;
      in += 1.0;
    }
  }
  if (gn > 0)
    for (auto& v : h.genuine) v /= gn;
  if (in > 0)
    for (auto& v : h.impostor) v /= in;
  return h;
}

double overlap_coefficient(const ScoreHistogram& h) {
  double acc = 0.0;
  for (std::size_t i = 0; i < h.genuine.size(); ++i)
    acc += std::min(h.genuine[i], h.impostor[i]);
  return acc;
}

void save_scores_csv(std::ostream& os,
                     const std::vector<ScoreRecord>& records) {
  os << "video_id,sequence_index,score,label\n";
  char buf[64];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof buf, "%.17g", r.score);
    os << r.video_id << ',' << r.sequence_index << ',' << buf << ','
       << r.label << '\n';
  }
}

std::vector<ScoreRecord> load_scores_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) ||
      line != "video_id,sequence_index,score,label")
    throw std::invalid_argument("bad score CSV header");
  std::vector<ScoreRecord> out;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    ScoreRecord r;
    std::string field;
    if (!std::getline(ss, r.video_id, ',') || r.video_id.empty())
      throw std::invalid_argument("bad CSV line " + std::to_string(lineno));
    try {
      if (!std::getline(ss, field, ',')) throw std::invalid_argument("short");
      r.sequence_index = std::stoul(field);
      if (!std::getline(ss, field, ',')) throw std::invalid_argument("short");
      r.score = std::stod(field);
      if (!std::getline(ss, field)) throw std::invalid_argument("short");
      r.label = std::stoi(field);
    } catch (const std::exception&) {
      throw std::invalid_argument("bad CSV line " + std::to_string(lineno));
    }
    if (r.label != 0 && r.label != 1)
      throw std::invalid_argument("bad label on CSV line " +
                                  std::to_string(lineno));
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace isoface
