#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "fedsim/data.hpp"
#include "fedsim/errors.hpp"
#include "fedsim/matrix.hpp"

namespace fedsim {

// Scored multilabel predictions against binary targets. class_counts are the
// per-label positive counts on the reference training pool (pooled across
// all institutions), used for head/tail grouping.
struct ClassifScores {
  Matrix probs;    // n x L
  Matrix targets;  // n x L in {0,1}
  double decision_threshold = 0.5;
  std::vector<long> class_counts;
};

namespace detail {

inline void check_scores(const ClassifScores& s) {
  if (!s.probs.same_shape(s.targets))
    throw ShapeError("probs/targets shape mismatch");
  if (s.probs.rows == 0) throw ShapeError("metrics need at least one sample");
  if (!(s.decision_threshold > 0.0 && s.decision_threshold < 1.0))
    throw ConfigError("decision threshold must lie in (0,1)");
}

}  // namespace detail

// F1 over confusion counts pooled across all labels. Defined as 0 when
// precision + recall is 0.
inline double micro_f1(const ClassifScores& s) {
  detail::check_scores(s);
  long tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < s.probs.data.size(); ++i) {
    const bool pred = s.probs.data[i] >= s.decision_threshold;
    const bool truth = s.targets.data[i] != 0.0;
    if (pred && truth)
      ++tp;
    else if (pred && !truth)
      ++fp;
    else if (!pred && truth)
      ++fn;
  }
  const long denom = 2 * tp + fp + fn;
  return denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

inline double hamming_loss(const ClassifScores& s) {
  detail::check_scores(s);
  long wrong = 0;
  for (std::size_t i = 0; i < s.probs.data.size(); ++i) {
    const bool pred = s.probs.data[i] >= s.decision_threshold;
    const bool truth = s.targets.data[i] != 0.0;
    if (pred != truth) ++wrong;
  }
  return static_cast<double>(wrong) / static_cast<double>(s.probs.data.size());
}

struct AveragePrecisionResult {
  double map = 0.0;
  std::vector<double> per_label;  // NaN for excluded labels
  int excluded = 0;               // labels with no positive in the targets
};

// Average precision per label over the ranked prediction list, with recall
// steps at each positive; ranking ties break by lower sample index. Labels
// with no positive are excluded from the mean and reported.
inline AveragePrecisionResult mean_average_precision(const ClassifScores& s) {
  detail::check_scores(s);
  const std::size_t n = s.probs.rows;
  const std::size_t labels = s.probs.cols;
  AveragePrecisionResult res;
  res.per_label.assign(labels, std::numeric_limits<double>::quiet_NaN());
  double sum = 0.0;
  int included = 0;
  std::vector<std::size_t> order(n);
  for (std::size_t l = 0; l < labels; ++l) {
    long positives = 0;
    for (std::size_t i = 0; i < n; ++i)
      if (s.targets(i, l) != 0.0) ++positives;
    if (positives == 0) {
      ++res.excluded;
      continue;
    }
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return s.probs(a, l) > s.probs(b, l);
    });
    double ap = 0.0;
    long tp = 0;
    for (std::size_t rank = 0; rank < n; ++rank) {
      if (s.targets(order[rank], l) != 0.0) {
        ++tp;
        const double precision =
            static_cast<double>(tp) / static_cast<double>(rank + 1);
        ap += precision / static_cast<double>(positives);
      }
    }
    res.per_label[l] = ap;
    sum += ap;
    ++included;
  }
  if (included == 0)
    throw UndefinedMetricError("mAP undefined: no label has a positive sample");
  res.map = sum / static_cast<double>(included);
  return res;
}

struct MacroF1Stats {
  std::vector<double> per_class_f1;
  double mean = 0.0;
  double std_dev = 0.0;  // population standard deviation across classes
};

inline MacroF1Stats macro_f1_stats(const ClassifScores& s) {
  detail::check_scores(s);
  const std::size_t labels = s.probs.cols;
  MacroF1Stats out;
  out.per_class_f1.resize(labels);
  for (std::size_t l = 0; l < labels; ++l) {
    long tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < s.probs.rows; ++i) {
      const bool pred = s.probs(i, l) >= s.decision_threshold;
      const bool truth = s.targets(i, l) != 0.0;
      if (pred && truth)
        ++tp;
      else if (pred && !truth)
        ++fp;
      else if (!pred && truth)
        ++fn;
    }
    const long denom = 2 * tp + fp + fn;
    out.per_class_f1[l] =
        denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
  }
  for (double f : out.per_class_f1) out.mean += f;
  out.mean /= static_cast<double>(labels);
  double var = 0.0;
  for (double f : out.per_class_f1) var += (f - out.mean) * (f - out.mean);
  out.std_dev = std::sqrt(var / static_cast<double>(labels));
  return out;
}

struct TopkResult {
  double head_avg = 0.0;
  double tail_avg = 0.0;
  double rel_drop_percent = 0.0;  // 100 * (head - tail) / head, 0 when head is 0
};

// Head group: the k most populous classes; tail: the k least populous. Count
// ties resolve toward the head (lower class index ranks as more populous).
inline TopkResult topk_head_tail(const std::vector<double>& per_class_f1,
                                 const std::vector<long>& class_counts, int k) {
  if (per_class_f1.size() != class_counts.size())
    throw ShapeError("per-class F1 and class counts differ in length");
  const int classes = static_cast<int>(per_class_f1.size());
  if (k <= 0 || 2 * k > classes)
    throw ConfigError("topk requires 2k <= number of classes");
  std::vector<int> order(classes);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (class_counts[a] != class_counts[b]) return class_counts[a] > class_counts[b];
    return a < b;
  });
  TopkResult res;
  for (int i = 0; i < k; ++i) res.head_avg += per_class_f1[order[i]];
  for (int i = classes - k; i < classes; ++i) res.tail_avg += per_class_f1[order[i]];
  res.head_avg /= k;
  res.tail_avg /= k;
  res.rel_drop_percent =
      res.head_avg == 0.0 ? 0.0
                          : 100.0 * (res.head_avg - res.tail_avg) / res.head_avg;
  return res;
}

// One predicted/true mask pair; pixels with ignore == 1 are excluded from
// every count and from the boundary computation.
struct SegPair {
  std::vector<int> pred_mask;
  std::vector<int> true_mask;
  std::vector<int> ignore;  // may be empty
  int h = 0;
  int w = 0;
  int class_of_interest = 1;
};

namespace detail {

inline void check_seg_pair(const SegPair& p) {
  const std::size_t n = static_cast<std::size_t>(p.h) * p.w;
  if (p.pred_mask.size() != n || p.true_mask.size() != n ||
      (!p.ignore.empty() && p.ignore.size() != n))
    throw ShapeError("segmentation pair shape mismatch");
  if (p.class_of_interest < 1) throw ConfigError("class_of_interest must be >= 1");
}

inline bool seg_in_region(const SegPair& p, const std::vector<int>& mask,
                          std::size_t q) {
  if (!p.ignore.empty() && p.ignore[q] != 0) return false;
  return mask[q] == p.class_of_interest;
}

// Region pixels with at least one 4-neighbor outside the region; the image
// border counts as outside.
inline std::vector<std::pair<int, int>> region_edges(const SegPair& p,
                                                     const std::vector<int>& mask) {
  std::vector<std::pair<int, int>> edges;
  auto inside = [&](int r, int c) {
    if (r < 0 || c < 0 || r >= p.h || c >= p.w) return false;
    return seg_in_region(p, mask, static_cast<std::size_t>(r) * p.w + c);
  };
  for (int r = 0; r < p.h; ++r) {
    for (int c = 0; c < p.w; ++c) {
      if (!inside(r, c)) continue;
      if (!inside(r - 1, c) || !inside(r + 1, c) || !inside(r, c - 1) ||
          !inside(r, c + 1))
        edges.emplace_back(r, c);
    }
  }
  return edges;
}

inline double directed_hausdorff(const std::vector<std::pair<int, int>>& from,
                                 const std::vector<std::pair<int, int>>& to) {
  double worst = 0.0;
  for (const auto& a : from) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& b : to) {
      const double dr = a.first - b.first;
      const double dc = a.second - b.second;
      best = std::min(best, dr * dr + dc * dc);
    }
    worst = std::max(worst, best);
  }
  return std::sqrt(worst);
}

}  // namespace detail

// DICE = 2|y ∩ ŷ| / (|y| + |ŷ|) after binarizing both masks at the class of
// interest; defined as 1.0 when both regions are empty.
inline double dice(const SegPair& p) {
  detail::check_seg_pair(p);
  long inter = 0, pred = 0, truth = 0;
  for (std::size_t q = 0; q < p.pred_mask.size(); ++q) {
    const bool a = detail::seg_in_region(p, p.pred_mask, q);
    const bool b = detail::seg_in_region(p, p.true_mask, q);
    if (a) ++pred;
    if (b) ++truth;
    if (a && b) ++inter;
  }
  if (pred + truth == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(pred + truth);
}

// Symmetric Hausdorff distance between region boundaries, computed exactly.
// Undefined (throws) when either region is empty after ignore filtering;
// callers report that as a missing value.
inline double hausdorff(const SegPair& p) {
  detail::check_seg_pair(p);
  const auto edge_pred = detail::region_edges(p, p.pred_mask);
  const auto edge_true = detail::region_edges(p, p.true_mask);
  if (edge_pred.empty() || edge_true.empty())
    throw UndefinedMetricError("hausdorff undefined for an empty region");
  return std::max(detail::directed_hausdorff(edge_pred, edge_true),
                  detail::directed_hausdorff(edge_true, edge_pred));
}

inline double relative_to_central(double score, double central_score) {
  if (!(central_score > 0.0))
    throw UndefinedMetricError("relative score undefined for central <= 0");
  return 100.0 * score / central_score;
}

// ---------------------------------------------------------------------------
// Aggregated evaluation reports.

struct TopkEntry {
  int k = 0;
  double head = 0.0;
  double tail = 0.0;
  double drop = 0.0;
};

struct MetricsReport {
  bool global_scope = true;
  int client_id = -1;  // LOCAL: test-set owner; local-only GLOBAL: model owner

  // multilabel
  double micro_f1 = std::numeric_limits<double>::quiet_NaN();
  double map = std::numeric_limits<double>::quiet_NaN();
  double hamming = std::numeric_limits<double>::quiet_NaN();
  double macro_f1_mean = std::numeric_limits<double>::quiet_NaN();
  double macro_f1_std = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> per_class_f1;
  std::vector<TopkEntry> topk;
  int map_excluded_labels = 0;

  // segmentation; indexed by class id, entry 0 unused, NaN = missing
  std::vector<double> dice_per_class;
  std::vector<double> hausdorff_per_class;

  // Mean DICE over the scored foreground classes (NaN entries skipped).
  double mean_dice() const {
    double sum = 0.0;
    int n = 0;
    for (std::size_t c = 1; c < dice_per_class.size(); ++c) {
      if (!std::isnan(dice_per_class[c])) {
        sum += dice_per_class[c];
        ++n;
      }
    }
    return n == 0 ? std::numeric_limits<double>::quiet_NaN() : sum / n;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["scope"] = global_scope ? std::string("GLOBAL")
                              : "LOCAL(" + std::to_string(client_id) + ")";
    if (!global_scope || client_id >= 0) j["client_id"] = client_id;
    auto put = [&j](const char* key, double v) {
      if (std::isnan(v))
        j[key] = nullptr;
      else
        j[key] = v;
    };
    if (!std::isnan(micro_f1) || !per_class_f1.empty()) {
      put("micro_f1", micro_f1);
      put("map", map);
      put("hl", hamming);
      put("macro_f1_mean", macro_f1_mean);
      put("macro_f1_std", macro_f1_std);
      j["map_excluded_labels"] = map_excluded_labels;
      for (const TopkEntry& t : topk) {
        const std::string base = "topk_k" + std::to_string(t.k) + "_";
        j[base + "head"] = t.head;
        j[base + "tail"] = t.tail;
        j[base + "drop"] = t.drop;
      }
    }
    for (std::size_t c = 1; c < dice_per_class.size(); ++c)
      put(("dice_c" + std::to_string(c)).c_str(), dice_per_class[c]);
    for (std::size_t c = 1; c < hausdorff_per_class.size(); ++c)
      put(("hd_c" + std::to_string(c)).c_str(), hausdorff_per_class[c]);
    return j;
  }
};

// Full multilabel report. Top-k entries are emitted for each requested k
// that satisfies 2k <= n_labels.
inline MetricsReport evaluate_multilabel(const Matrix& probs, const Matrix& targets,
                                         const std::vector<long>& class_counts,
                                         const std::vector<int>& ks = {1, 3, 5, 10},
                                         double threshold = 0.5) {
  ClassifScores s{probs, targets, threshold, class_counts};
  MetricsReport rep;
  rep.micro_f1 = micro_f1(s);
  rep.hamming = hamming_loss(s);
  const MacroF1Stats macro = macro_f1_stats(s);
  rep.macro_f1_mean = macro.mean;
  rep.macro_f1_std = macro.std_dev;
  rep.per_class_f1 = macro.per_class_f1;
  try {
    const AveragePrecisionResult ap = mean_average_precision(s);
    rep.map = ap.map;
    rep.map_excluded_labels = ap.excluded;
  } catch (const UndefinedMetricError&) {
    rep.map_excluded_labels = static_cast<int>(probs.cols);
  }
  if (class_counts.size() == macro.per_class_f1.size()) {
    for (int k : ks) {
      if (2 * k <= static_cast<int>(probs.cols)) {
        const TopkResult t = topk_head_tail(macro.per_class_f1, class_counts, k);
        rep.topk.push_back({k, t.head_avg, t.tail_avg, t.rel_drop_percent});
      }
    }
  }
  return rep;
}

// Per-class mean DICE and mean Hausdorff over a set of mask pairs. Hausdorff
// values undefined for a sample are skipped; a class with no defined sample
// reports NaN (missing). `scored_classes` restricts which foreground classes
// are evaluated (empty = all).
inline MetricsReport evaluate_segmentation(
    const std::vector<std::vector<int>>& preds,
    const std::vector<std::vector<int>>& truths,
    const std::vector<std::vector<int>>& ignores, int h, int w, int n_classes,
    const std::set<int>& scored_classes = {}) {
  if (preds.size() != truths.size() ||
      (!ignores.empty() && ignores.size() != preds.size()))
    throw ShapeError("prediction/truth counts differ");
  MetricsReport rep;
  rep.dice_per_class.assign(n_classes, std::numeric_limits<double>::quiet_NaN());
  rep.hausdorff_per_class.assign(n_classes,
                                 std::numeric_limits<double>::quiet_NaN());
  for (int cls = 1; cls < n_classes; ++cls) {
    if (!scored_classes.empty() && scored_classes.count(cls) == 0) continue;
    double dice_sum = 0.0;
    double hd_sum = 0.0;
    std::size_t hd_n = 0;
    for (std::size_t s = 0; s < preds.size(); ++s) {
      SegPair pair{preds[s], truths[s],
                   ignores.empty() ? std::vector<int>{} : ignores[s], h, w, cls};
      dice_sum += dice(pair);
      try {
        hd_sum += hausdorff(pair);
        ++hd_n;
      } catch (const UndefinedMetricError&) {
      }
    }
    if (!preds.empty())
      rep.dice_per_class[cls] = dice_sum / static_cast<double>(preds.size());
    if (hd_n > 0) rep.hausdorff_per_class[cls] = hd_sum / static_cast<double>(hd_n);
  }
  return rep;
}

}  // namespace fedsim
