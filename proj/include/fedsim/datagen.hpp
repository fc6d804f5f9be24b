#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "fedsim/data.hpp"
#include "fedsim/errors.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

// Synthetic federated scenario description. One generator call produces the
// whole federation: per-client train/test splits plus the pooled global test
// set, deterministically from (config, seed).
struct ScenarioConfig {
  TaskKind task = TaskKind::multilabel;
  int n_clients = 4;
  std::vector<int> samples_per_client;
  std::uint64_t seed = 0;

  // multilabel
  int n_labels = 20;
  int input_dim = 24;
  double zipf_exponent = 2.0;
  double label_prior_concentration = 10.0;  // Dirichlet alpha
  double feature_shift_scale = 0.0;
  double labels_per_sample = 1.5;
  std::vector<std::vector<int>> label_dropout;  // absent labels per client

  // segmentation
  int grid_h = 16;
  int grid_w = 16;
  int n_classes = 4;  // class 0 is background
  std::vector<std::set<int>> completeness_profile;  // annotatable classes

  void validate() const {
    if (n_clients <= 0) throw ConfigError("n_clients must be positive");
    if (samples_per_client.size() != static_cast<std::size_t>(n_clients))
      throw ConfigError("samples_per_client must list every client");
    for (int n : samples_per_client)
      if (n < 2) throw ConfigError("each client needs at least 2 samples");
    if (task == TaskKind::multilabel) {
      if (n_labels < 2) throw ConfigError("n_labels must be >= 2");
      if (input_dim <= 0) throw ConfigError("input_dim must be positive");
      if (zipf_exponent <= 0) throw ConfigError("zipf_exponent must be positive");
      if (label_prior_concentration <= 0)
        throw ConfigError("label_prior_concentration must be positive");
      if (feature_shift_scale < 0)
        throw ConfigError("feature_shift_scale must be non-negative");
      if (!label_dropout.empty() &&
          label_dropout.size() != static_cast<std::size_t>(n_clients))
        throw ConfigError("label_dropout must list every client");
      // Every label must survive at at least one client.
      for (int l = 0; l < n_labels; ++l) {
        bool kept = label_dropout.empty();
        for (int c = 0; c < n_clients && !kept; ++c) {
          bool dropped = false;
          for (int d : label_dropout[c]) dropped = dropped || d == l;
          kept = !dropped;
        }
        if (!kept)
          throw ConfigError("label " + std::to_string(l) +
                            " is absent from every client");
      }
    } else {
      if (n_classes < 2) throw ConfigError("n_classes must be >= 2");
      if (grid_h < 8 || grid_w < 8)
        throw ConfigError("segmentation grids below 8x8 are not supported");
      if (!completeness_profile.empty() &&
          completeness_profile.size() != static_cast<std::size_t>(n_clients))
        throw ConfigError("completeness_profile must list every client");
      for (const auto& prof : completeness_profile) {
        for (int cls : prof)
          if (cls < 1 || cls >= n_classes)
            throw ConfigError("completeness classes must lie in [1, n_classes)");
      }
      for (int cls = 1; cls < n_classes; ++cls) {
        bool annotated = completeness_profile.empty();
        for (const auto& prof : completeness_profile)
          annotated = annotated || prof.count(cls) > 0;
        if (!annotated)
          throw ConfigError("class " + std::to_string(cls) +
                            " is annotated by no client");
      }
    }
  }
};

namespace detail {

// Integer apportionment of `total` proportional to `weights` (largest
// remainder, ties to the lower index). Non-increasing weights yield
// non-increasing counts.
inline std::vector<long> largest_remainder(long total,
                                           const std::vector<double>& weights) {
  const std::size_t n = weights.size();
  double wsum = 0.0;
  for (double w : weights) wsum += w;
  std::vector<long> out(n, 0);
  if (total <= 0 || wsum <= 0.0) return out;
  std::vector<double> rem(n, 0.0);
  long assigned = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double quota = static_cast<double>(total) * weights[i] / wsum;
    out[i] = static_cast<long>(std::floor(quota));
    rem[i] = quota - static_cast<double>(out[i]);
    assigned += out[i];
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (rem[a] != rem[b]) return rem[a] > rem[b];
    return a < b;
  });
  for (std::size_t k = 0; assigned < total && k < n; ++k, ++assigned)
    ++out[order[k]];
  return out;
}

// Apportions `total` over clients proportional to `weights`, honoring the
// per-client caps. Runs largest-remainder passes, clamping filled clients.
// Returns less than `total` only when the caps cannot hold it.
inline std::vector<long> capped_apportion(long total,
                                          const std::vector<double>& weights,
                                          const std::vector<long>& caps) {
  const std::size_t n = weights.size();
  std::vector<long> out(n, 0);
  long remaining = total;
  for (int guard = 0; remaining > 0 && guard < 64; ++guard) {
    std::vector<double> w(n, 0.0);
    double wsum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (out[i] < caps[i] && weights[i] > 0.0) {
        w[i] = weights[i];
        wsum += w[i];
      }
    }
    if (wsum <= 0.0) break;
    const std::vector<long> add = largest_remainder(remaining, w);
    bool progressed = false;
    for (std::size_t i = 0; i < n; ++i) {
      const long take = std::min(add[i], caps[i] - out[i]);
      out[i] += take;
      remaining -= take;
      progressed = progressed || take > 0;
    }
    if (!progressed) break;
  }
  return out;
}

// Per-client deterministic 8:2-style split; round(ratio*n) with exact
// half-up rounding.
inline long split_point(std::size_t n, double ratio) {
  return std::llround(ratio * static_cast<double>(n));
}

}  // namespace detail

// Shuffles each client pool and cuts it at round(ratio*n); the global test
// set is the concatenation of the local test sets in client-id order.
inline FederatedDataset split_local_global(const std::vector<Batch>& pools,
                                           double ratio, std::uint64_t seed) {
  FederatedDataset ds;
  if (pools.empty()) throw ConfigError("no client pools to split");
  ds.task = pools.front().kind;
  Rng base(seed);
  for (std::size_t c = 0; c < pools.size(); ++c) {
    const std::size_t n = pools[c].size();
    if (n < 2)
      throw ConfigError("client pool " + std::to_string(c) +
                        " is too small to hold out a test set");
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    Rng stream = base.derive(c);
    stream.shuffle(idx);
    const long cut = detail::split_point(n, ratio);
    std::vector<std::size_t> train_idx(idx.begin(), idx.begin() + cut);
    std::vector<std::size_t> test_idx(idx.begin() + cut, idx.end());
    InstitutionData inst;
    inst.client_id = static_cast<int>(c);
    inst.train = take_rows(pools[c], train_idx);
    inst.test = take_rows(pools[c], test_idx);
    ds.clients.push_back(std::move(inst));
  }
  std::vector<const Batch*> tests;
  for (const auto& cst : ds.clients) tests.push_back(&cst.test);
  ds.global_test = concat_batches(tests);
  return ds;
}

// ---------------------------------------------------------------------------
// Multilabel scenario. Global label marginals follow a Zipf law; per-client
// label priors are Dirichlet perturbations of it; dropped labels never occur
// at their client. Label instances are budgeted globally per label (which
// pins the long-tail ordering exactly) and dealt to clients proportional to
// size-weighted priors, then placed into samples fewest-labels-first.

inline FederatedDataset gen_multilabel_scenario(const ScenarioConfig& cfg) {
  cfg.validate();
  if (cfg.task != TaskKind::multilabel)
    throw ConfigError("gen_multilabel_scenario needs task=multilabel");
  const int L = cfg.n_labels;
  const int C = cfg.n_clients;
  Rng base(cfg.seed);
  Rng proto_rng = base.derive(1);
  Rng shift_rng = base.derive(5);

  std::vector<double> zipf(L);
  for (int j = 0; j < L; ++j) zipf[j] = std::pow(static_cast<double>(j + 1),
                                                 -cfg.zipf_exponent);
  double zsum = 0.0;
  for (double z : zipf) zsum += z;
  for (double& z : zipf) z /= zsum;

  long total_samples = 0;
  for (int n : cfg.samples_per_client) total_samples += n;
  const long total_instances =
      std::llround(cfg.labels_per_sample * static_cast<double>(total_samples));
  const std::vector<long> global_counts =
      detail::largest_remainder(total_instances, zipf);

  const auto dropped = [&](int c, int l) {
    if (cfg.label_dropout.empty()) return false;
    for (int d : cfg.label_dropout[c])
      if (d == l) return true;
    return false;
  };

  // Per-client label priors.
  std::vector<std::vector<double>> prior(C);
  for (int c = 0; c < C; ++c) {
    std::vector<double> conc(L);
    for (int j = 0; j < L; ++j) conc[j] = cfg.label_prior_concentration * zipf[j];
    Rng r = base.derive(2).derive(c);
    prior[c] = r.dirichlet(conc);
  }

  // Instance counts per (client, label).
  std::vector<std::vector<long>> m(C, std::vector<long>(L, 0));
  for (int j = 0; j < L; ++j) {
    std::vector<double> w(C, 0.0);
    std::vector<long> caps(C, 0);
    double wsum = 0.0;
    for (int c = 0; c < C; ++c) {
      if (dropped(c, j)) continue;
      caps[c] = cfg.samples_per_client[c];
      w[c] = cfg.samples_per_client[c] * prior[c][j];
      wsum += w[c];
    }
    if (wsum <= 0.0) {
      for (int c = 0; c < C; ++c)
        if (!dropped(c, j)) w[c] = cfg.samples_per_client[c];
    }
    const std::vector<long> alloc = detail::capped_apportion(global_counts[j], w, caps);
    for (int c = 0; c < C; ++c) m[c][j] = alloc[c];
  }

  // Build per-client pools.
  std::vector<Batch> pools(C);
  for (int c = 0; c < C; ++c) {
    const int n = cfg.samples_per_client[c];
    Batch pool;
    pool.kind = TaskKind::multilabel;
    pool.targets = Matrix(n, L);
    std::vector<int> count(n, 0);
    std::vector<std::size_t> order(n);
    for (int j = 0; j < L; ++j) {
      long need = m[c][j];
      if (need == 0) continue;
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return count[a] < count[b];
      });
      for (long k = 0; k < need; ++k) {
        pool.targets(order[k], j) = 1.0;
        ++count[order[k]];
      }
    }
    // Count-preserving fix-up: move one label from a multi-label sample to
    // each uncovered one, so per-label counts stay exact.
    for (int s = 0; s < n; ++s) {
      if (count[s] != 0) continue;
      int donor = -1;
      for (int d = 0; d < n; ++d)
        if (count[d] >= 2 && (donor < 0 || count[d] > count[donor])) donor = d;
      if (donor < 0) break;
      for (int j = 0; j < L; ++j) {
        if (pool.targets(donor, j) != 0.0) {
          pool.targets(donor, j) = 0.0;
          pool.targets(s, j) = 1.0;
          --count[donor];
          ++count[s];
          break;
        }
      }
    }
    pools[c] = std::move(pool);
  }

  // Label prototypes and client shifts.
  Matrix protos(L, cfg.input_dim);
  for (double& v : protos.data) v = proto_rng.normal();
  std::vector<std::vector<double>> shift(C, std::vector<double>(cfg.input_dim, 0.0));
  for (int c = 0; c < C; ++c) {
    Rng r = shift_rng.derive(c);
    double norm = 0.0;
    for (double& v : shift[c]) {
      v = r.normal();
      norm += v * v;
    }
    norm = std::sqrt(norm);
    if (norm > 0.0)
      for (double& v : shift[c]) v *= cfg.feature_shift_scale / norm;
  }

  for (int c = 0; c < C; ++c) {
    const int n = cfg.samples_per_client[c];
    Rng noise = base.derive(4).derive(c);
    pools[c].features = Matrix(n, cfg.input_dim);
    for (int s = 0; s < n; ++s) {
      for (int d = 0; d < cfg.input_dim; ++d) {
        double x = shift[c][d] + noise.normal();
        for (int j = 0; j < L; ++j)
          if (pools[c].targets(s, j) != 0.0) x += protos(j, d);
        pools[c].features(s, d) = x;
      }
    }
  }

  FederatedDataset ds = split_local_global(pools, 0.8, base.derive(6).next_u64());
  ds.task = TaskKind::multilabel;
  for (int j = 0; j < L; ++j) ds.label_names.push_back("label_" + std::to_string(j));
  ds.class_counts_global.assign(L, 0);
  for (const auto& inst : ds.clients)
    for (std::size_t s = 0; s < inst.train.size(); ++s)
      for (int j = 0; j < L; ++j)
        if (inst.train.targets(s, j) != 0.0) ++ds.class_counts_global[j];
  for (int c = 0; c < C; ++c) {
    std::set<int> avail;
    for (int j = 0; j < L; ++j)
      if (!dropped(c, j)) avail.insert(j);
    ds.clients[c].completeness = std::move(avail);
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Segmentation scenario. Each image holds a nested ellipse structure (outer
// ring = class 2, inner disk = class 1) plus a disjoint blob (class 3) on a
// noisy background. Clients with a partial completeness profile store classes
// outside their profile as background and flag exactly those pixels in
// ignore_mask ("Maybe-BG"); the untouched ground truth is retained in
// truth_masks for test oracles only.

inline FederatedDataset gen_segmentation_scenario(const ScenarioConfig& cfg) {
  cfg.validate();
  if (cfg.task != TaskKind::segmentation)
    throw ConfigError("gen_segmentation_scenario needs task=segmentation");
  const int H = cfg.grid_h, W = cfg.grid_w;
  const std::size_t px = static_cast<std::size_t>(H) * W;
  Rng base(cfg.seed);

  const auto profile_of = [&](int c) -> std::set<int> {
    if (cfg.completeness_profile.empty()) {
      std::set<int> full;
      for (int k = 1; k < cfg.n_classes; ++k) full.insert(k);
      return full;
    }
    return cfg.completeness_profile[c];
  };

  // Per-pixel intensity bases per class; clients add a brightness offset.
  const double class_base[4] = {0.10, 0.90, 0.50, 0.70};

  std::vector<Batch> pools(cfg.n_clients);
  for (int c = 0; c < cfg.n_clients; ++c) {
    const int n = cfg.samples_per_client[c];
    Rng geom = base.derive(2).derive(c);
    Rng noise = base.derive(4).derive(c);
    double brightness = 0.0;
    {
      Rng r = base.derive(5).derive(c);
      brightness = cfg.feature_shift_scale * r.normal();
    }
    const std::set<int> profile = profile_of(c);

    Batch pool;
    pool.kind = TaskKind::segmentation;
    pool.grid_h = H;
    pool.grid_w = W;
    pool.images = Matrix(n, px);
    pool.masks.resize(n);
    pool.ignore.resize(n);
    pool.truth_masks.resize(n);

    for (int s = 0; s < n; ++s) {
      std::vector<int> truth(px, 0);
      const double cy = H / 2.0 - 1.0 + geom.uniform(-1.0, 1.0);
      const double cx = W / 2.0 - 1.0 + geom.uniform(-1.0, 1.0);
      const double a = geom.uniform(0.25, 0.31) * W;  // outer semi-axes
      const double b = geom.uniform(0.22, 0.28) * H;
      const double shrink = geom.uniform(0.52, 0.62);
      // Blob sits toward the corner farthest from the ellipse center.
      const double dir_r = (cy < H / 2.0 ? 1.0 : -1.0);
      const double dir_c = (cx < W / 2.0 ? 1.0 : -1.0);
      const double blob_r = geom.uniform(1.2, 2.0);
      const double dist = a + blob_r + 1.5;
      const double bcy = cy + dir_r * dist * 0.75;
      const double bcx = cx + dir_c * dist * 0.75;
      for (int r = 0; r < H; ++r) {
        for (int col = 0; col < W; ++col) {
          const std::size_t q = static_cast<std::size_t>(r) * W + col;
          const double er = (r - cy) / b;
          const double ec = (col - cx) / a;
          const double e = er * er + ec * ec;
          if (e <= shrink * shrink)
            truth[q] = 1;  // inner disk
          else if (e <= 1.0)
            truth[q] = 2;  // ring
          else {
            const double dr = r - bcy, dc = col - bcx;
            if (dr * dr + dc * dc <= blob_r * blob_r) truth[q] = 3;
          }
        }
      }
      std::vector<int> stored(px), ign(px, 0);
      for (std::size_t q = 0; q < px; ++q) {
        const int cls = truth[q];
        if (cls != 0 && cls < cfg.n_classes && profile.count(cls) == 0) {
          stored[q] = 0;
          ign[q] = 1;  // Maybe-BG: relabeled, excluded from loss and eval
        } else {
          stored[q] = cls;
        }
      }
      for (std::size_t q = 0; q < px; ++q) {
        const int cls = truth[q] < 4 ? truth[q] : 0;
        pool.images(s, q) = class_base[cls] + brightness + noise.normal(0.0, 0.08);
      }
      pool.truth_masks[s] = std::move(truth);
      pool.masks[s] = std::move(stored);
      pool.ignore[s] = std::move(ign);
    }
    pools[c] = std::move(pool);
  }

  FederatedDataset ds = split_local_global(pools, 0.8, base.derive(6).next_u64());
  ds.task = TaskKind::segmentation;
  ds.n_classes = cfg.n_classes;
  for (int k = 0; k < cfg.n_classes; ++k)
    ds.label_names.push_back("class_" + std::to_string(k));
  ds.class_counts_global.assign(cfg.n_classes, 0);
  for (std::size_t c = 0; c < ds.clients.size(); ++c) {
    ds.clients[c].completeness = profile_of(static_cast<int>(c));
    const Batch& tr = ds.clients[c].train;
    for (std::size_t s = 0; s < tr.size(); ++s)
      for (std::size_t q = 0; q < px; ++q)
        if (tr.ignore[s][q] == 0) ++ds.class_counts_global[tr.masks[s][q]];
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Partitioners over a pooled batch.

inline std::vector<Batch> partition_random(const Batch& pooled, int n_clients,
                                           const std::vector<int>& sizes,
                                           std::uint64_t seed) {
  if (sizes.size() != static_cast<std::size_t>(n_clients))
    throw ConfigError("sizes must list every client");
  long total = 0;
  for (int s : sizes) total += s;
  if (total > static_cast<long>(pooled.size()))
    throw ConfigError("partition sizes exceed the pooled sample count");
  std::vector<std::size_t> idx(pooled.size());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  rng.shuffle(idx);
  std::vector<Batch> out;
  std::size_t at = 0;
  for (int c = 0; c < n_clients; ++c) {
    std::vector<std::size_t> slice(idx.begin() + at, idx.begin() + at + sizes[c]);
    at += sizes[c];
    out.push_back(take_rows(pooled, slice));
  }
  return out;
}

namespace detail {

inline std::vector<double> normalized_row(const Matrix& m, std::size_t r) {
  std::vector<double> v(m.cols);
  double norm = 0.0;
  for (std::size_t c = 0; c < m.cols; ++c) {
    v[c] = m(r, c);
    norm += v[c] * v[c];
  }
  norm = std::sqrt(norm);
  if (norm > 0.0)
    for (double& x : v) x /= norm;
  return v;
}

}  // namespace detail

// Cluster-then-shard non-IID partition: spherical k-means (cosine
// similarity, k-means++ style seeding, 20 iterations, ties to the lowest
// index), clusters ordered by descending size, the concatenated stream cut
// into near-equal shards (+/-1), and shards dealt at random, a fixed number
// per client.
inline std::vector<Batch> partition_noniid_clustershard(const Batch& pooled,
                                                        int k_clusters,
                                                        int n_shards,
                                                        int shards_per_client,
                                                        std::uint64_t seed) {
  const std::size_t n = pooled.size();
  if (n < static_cast<std::size_t>(n_shards))
    throw ConfigError("fewer samples than shards");
  if (n_shards % shards_per_client != 0)
    throw ConfigError("n_shards must be divisible by shards_per_client");
  const Matrix& feats =
      pooled.kind == TaskKind::multilabel ? pooled.features : pooled.images;

  std::vector<std::vector<double>> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = detail::normalized_row(feats, i);
  const std::size_t dim = feats.cols;

  Rng rng = Rng(seed).derive(1);
  const int k = std::min<int>(k_clusters, static_cast<int>(n));
  std::vector<std::vector<double>> centers;
  std::vector<char> chosen(n, 0);
  {
    // k-means++ style seeding on cosine distance.
    std::size_t first = rng.uniform_index(n);
    centers.push_back(x[first]);
    chosen[first] = 1;
    std::vector<double> d2(n);
    while (static_cast<int>(centers.size()) < k) {
      double total = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        double best = 2.0;
        for (const auto& c : centers) {
          double dotv = 0.0;
          for (std::size_t j = 0; j < dim; ++j) dotv += x[i][j] * c[j];
          best = std::min(best, 1.0 - dotv);
        }
        d2[i] = chosen[i] ? 0.0 : best * best;
        total += d2[i];
      }
      std::size_t pick = 0;
      if (total > 0.0) {
        const double target = rng.uniform() * total;
        double acc = 0.0;
        pick = n - 1;
        for (std::size_t i = 0; i < n; ++i) {
          acc += d2[i];
          if (acc >= target) {
            pick = i;
            break;
          }
        }
      } else {
        while (pick < n && chosen[pick]) ++pick;
        if (pick == n) break;
      }
      centers.push_back(x[pick]);
      chosen[pick] = 1;
    }
  }

  std::vector<int> assign(n, 0);
  for (int iter = 0; iter < 20; ++iter) {
    for (std::size_t i = 0; i < n; ++i) {
      int best = 0;
      double best_sim = -2.0;
      for (std::size_t c = 0; c < centers.size(); ++c) {
        double sim = 0.0;
        for (std::size_t j = 0; j < dim; ++j) sim += x[i][j] * centers[c][j];
        if (sim > best_sim) {
          best_sim = sim;
          best = static_cast<int>(c);
        }
      }
      assign[i] = best;
    }
    for (std::size_t c = 0; c < centers.size(); ++c) {
      std::vector<double> mean(dim, 0.0);
      std::size_t count = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (assign[i] != static_cast<int>(c)) continue;
        for (std::size_t j = 0; j < dim; ++j) mean[j] += x[i][j];
        ++count;
      }
      if (count == 0) continue;  // empty cluster keeps its center
      double norm = 0.0;
      for (double v : mean) norm += v * v;
      norm = std::sqrt(norm);
      if (norm > 0.0) {
        for (double& v : mean) v /= norm;
        centers[c] = std::move(mean);
      }
    }
  }

  // Clusters by descending size (ties to the lower cluster index), members in
  // original order.
  std::vector<long> cluster_size(centers.size(), 0);
  for (std::size_t i = 0; i < n; ++i) ++cluster_size[assign[i]];
  std::vector<int> cluster_order(centers.size());
  std::iota(cluster_order.begin(), cluster_order.end(), 0);
  std::sort(cluster_order.begin(), cluster_order.end(), [&](int a, int b) {
    if (cluster_size[a] != cluster_size[b]) return cluster_size[a] > cluster_size[b];
    return a < b;
  });
  std::vector<std::size_t> stream;
  stream.reserve(n);
  for (int c : cluster_order)
    for (std::size_t i = 0; i < n; ++i)
      if (assign[i] == c) stream.push_back(i);

  // Near-equal shards: the first (n mod n_shards) shards take one extra.
  std::vector<std::pair<std::size_t, std::size_t>> shard_ranges;
  {
    const std::size_t bsize = n / n_shards;
    const std::size_t extra = n % n_shards;
    std::size_t at = 0;
    for (int s = 0; s < n_shards; ++s) {
      const std::size_t len = bsize + (static_cast<std::size_t>(s) < extra ? 1 : 0);
      shard_ranges.emplace_back(at, at + len);
      at += len;
    }
  }
  std::vector<int> shard_order(n_shards);
  std::iota(shard_order.begin(), shard_order.end(), 0);
  Rng deal = Rng(seed).derive(2);
  deal.shuffle(shard_order);

  const int n_clients = n_shards / shards_per_client;
  std::vector<Batch> out;
  for (int c = 0; c < n_clients; ++c) {
    std::vector<std::size_t> member;
    for (int s = 0; s < shards_per_client; ++s) {
      const auto [lo, hi] = shard_ranges[shard_order[c * shards_per_client + s]];
      for (std::size_t i = lo; i < hi; ++i) member.push_back(stream[i]);
    }
    out.push_back(take_rows(pooled, member));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Ready-made scenario shapes used by the experiment configs and tests.

// Four institutions with the benchmark's sample-count profile at 1/100
// scale, a Zipf-2 long tail, Dirichlet label heterogeneity and per-client
// label dropout (two of the clients both lack label 4).
inline ScenarioConfig default_multilabel_scenario(std::uint64_t seed) {
  ScenarioConfig cfg;
  cfg.task = TaskKind::multilabel;
  cfg.n_clients = 4;
  cfg.samples_per_client = {224, 190, 363, 62};
  cfg.n_labels = 20;
  cfg.input_dim = 24;
  cfg.zipf_exponent = 2.0;
  cfg.label_prior_concentration = 10.0;
  cfg.feature_shift_scale = 1.0;
  cfg.label_dropout = {{}, {15, 19}, {4, 16, 18}, {4, 13, 17}};
  cfg.seed = seed;
  return cfg;
}

// Three institutions: one fully annotated, one annotating only class 1, one
// only class 2.
inline ScenarioConfig default_segmentation_scenario(std::uint64_t seed) {
  ScenarioConfig cfg;
  cfg.task = TaskKind::segmentation;
  cfg.n_clients = 3;
  cfg.samples_per_client = {60, 90, 75};
  cfg.grid_h = 16;
  cfg.grid_w = 16;
  cfg.n_classes = 4;
  cfg.completeness_profile = {{1, 2, 3}, {1}, {2}};
  cfg.seed = seed;
  return cfg;
}

}  // namespace fedsim
