#pragma once

#include <cstddef>
#include <set>
#include <string>
#include <vector>

#include "fedsim/errors.hpp"
#include "fedsim/matrix.hpp"

namespace fedsim {

enum class TaskKind { multilabel, segmentation };

inline const char* task_name(TaskKind k) {
  return k == TaskKind::multilabel ? "multilabel" : "segmentation";
}

// A set of samples for one task. Multilabel batches use features/targets;
// segmentation batches use images/masks plus an optional per-pixel ignore
// mask (1 = pixel excluded from loss and evaluation). `truth_masks` is
// generator-side ground truth kept only for test oracles; it is never
// serialized and never read by training code.
struct Batch {
  TaskKind kind = TaskKind::multilabel;

  // multilabel
  Matrix features;  // n x input_dim
  Matrix targets;   // n x n_labels, entries in {0,1}

  // segmentation
  int grid_h = 0;
  int grid_w = 0;
  Matrix images;                           // n x (grid_h*grid_w)
  std::vector<std::vector<int>> masks;     // stored class ids, row-major
  std::vector<std::vector<int>> ignore;    // 0/1, empty when nothing is ignored
  std::vector<std::vector<int>> truth_masks;

  std::size_t size() const {
    return kind == TaskKind::multilabel ? features.rows : images.rows;
  }

  bool has_ignore() const { return !ignore.empty(); }
};

// Selects rows of a batch in the given order (used for shuffling, splitting
// and partitioning). Carries every per-sample field along.
inline Batch take_rows(const Batch& b, const std::vector<std::size_t>& idx) {
  Batch out;
  out.kind = b.kind;
  if (b.kind == TaskKind::multilabel) {
    out.features = Matrix(idx.size(), b.features.cols);
    out.targets = Matrix(idx.size(), b.targets.cols);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      for (std::size_t c = 0; c < b.features.cols; ++c)
        out.features(r, c) = b.features(idx[r], c);
      for (std::size_t c = 0; c < b.targets.cols; ++c)
        out.targets(r, c) = b.targets(idx[r], c);
    }
  } else {
    out.grid_h = b.grid_h;
    out.grid_w = b.grid_w;
    out.images = Matrix(idx.size(), b.images.cols);
    for (std::size_t r = 0; r < idx.size(); ++r)
      for (std::size_t c = 0; c < b.images.cols; ++c)
        out.images(r, c) = b.images(idx[r], c);
    out.masks.reserve(idx.size());
    for (std::size_t r : idx) out.masks.push_back(b.masks[r]);
    if (!b.ignore.empty()) {
      out.ignore.reserve(idx.size());
      for (std::size_t r : idx) out.ignore.push_back(b.ignore[r]);
    }
    if (!b.truth_masks.empty()) {
      out.truth_masks.reserve(idx.size());
      for (std::size_t r : idx) out.truth_masks.push_back(b.truth_masks[r]);
    }
  }
  return out;
}

inline Batch concat_batches(const std::vector<const Batch*>& parts) {
  Batch out;
  if (parts.empty()) return out;
  out.kind = parts.front()->kind;
  std::size_t total = 0;
  for (const Batch* p : parts) total += p->size();
  if (out.kind == TaskKind::multilabel) {
    out.features = Matrix(total, parts.front()->features.cols);
    out.targets = Matrix(total, parts.front()->targets.cols);
    std::size_t r = 0;
    for (const Batch* p : parts) {
      if (p->features.cols != out.features.cols || p->targets.cols != out.targets.cols)
        throw ShapeError("cannot concatenate batches with different widths");
      for (std::size_t i = 0; i < p->size(); ++i, ++r) {
        for (std::size_t c = 0; c < out.features.cols; ++c)
          out.features(r, c) = p->features(i, c);
        for (std::size_t c = 0; c < out.targets.cols; ++c)
          out.targets(r, c) = p->targets(i, c);
      }
    }
  } else {
    out.grid_h = parts.front()->grid_h;
    out.grid_w = parts.front()->grid_w;
    out.images = Matrix(total, parts.front()->images.cols);
    bool any_ignore = false;
    bool any_truth = false;
    for (const Batch* p : parts) {
      if (p->grid_h != out.grid_h || p->grid_w != out.grid_w)
        throw ShapeError("cannot concatenate batches with different grids");
      any_ignore = any_ignore || !p->ignore.empty();
      any_truth = any_truth || !p->truth_masks.empty();
    }
    std::size_t r = 0;
    for (const Batch* p : parts) {
      for (std::size_t i = 0; i < p->size(); ++i, ++r) {
        for (std::size_t c = 0; c < out.images.cols; ++c)
          out.images(r, c) = p->images(i, c);
        out.masks.push_back(p->masks[i]);
        if (any_ignore) {
          if (!p->ignore.empty())
            out.ignore.push_back(p->ignore[i]);
          else
            out.ignore.emplace_back(p->masks[i].size(), 0);
        }
        if (any_truth) {
          if (!p->truth_masks.empty())
            out.truth_masks.push_back(p->truth_masks[i]);
          else
            out.truth_masks.push_back(p->masks[i]);
        }
      }
    }
  }
  return out;
}

// One client's private data with its fixed train/test split. For
// segmentation, `completeness` holds the foreground classes this institution
// can annotate; for multilabel, the labels that occur in its data.
struct InstitutionData {
  int client_id = 0;
  Batch train;
  Batch test;
  std::set<int> completeness;

  std::size_t n_train() const { return train.size(); }
  std::size_t n_test() const { return test.size(); }
};

// A full federated scenario: the clients plus the pooled global test set
// (the concatenation of every client's local test set, in client-id order).
struct FederatedDataset {
  TaskKind task = TaskKind::multilabel;
  std::vector<InstitutionData> clients;
  Batch global_test;
  std::vector<std::string> label_names;
  // Per-label positive counts (multilabel) or per-class reliable pixel counts
  // (segmentation) over the pooled training data.
  std::vector<long> class_counts_global;
  int n_classes = 0;  // segmentation only; class 0 is background

  std::size_t n_clients() const { return clients.size(); }
};

}  // namespace fedsim
