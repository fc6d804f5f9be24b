#pragma once

#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "fedsim/data.hpp"
#include "fedsim/errors.hpp"
#include "fedsim/matrix.hpp"

namespace fedsim {

constexpr int kEcgLeads = 12;
constexpr int kEcgTargetLen = 5000;  // 10 s at 500 Hz
constexpr int kMaskTargetSize = 112;

// Lead order: I, II, III, aVR, aVL, aVF, V1..V6.
struct RawRecord {
  std::string source_id;
  Matrix signal;  // 12 x T
  std::vector<std::string> raw_labels;
  std::optional<double> age;
  std::string sex;
};

// Keeps the first `target_len` columns of an over-long signal and extends a
// short one by repeating its final column (edge padding on the right).
inline Matrix pad_or_truncate(const Matrix& signal, int target_len = kEcgTargetLen) {
  if (signal.rows != kEcgLeads)
    throw ShapeError("expected a 12-lead signal, got " +
                     std::to_string(signal.rows) + " rows");
  if (signal.cols == 0) throw ShapeError("signal must have at least one sample");
  if (signal.cols == static_cast<std::size_t>(target_len)) return signal;
  Matrix out(kEcgLeads, target_len);
  for (std::size_t r = 0; r < signal.rows; ++r) {
    for (int c = 0; c < target_len; ++c) {
      const std::size_t src =
          std::min<std::size_t>(c, signal.cols - 1);  // replicate last column
      out(r, c) = signal(r, src);
    }
  }
  return out;
}

// Nearest-neighbor mask resampling: out(i,j) = in(i*H/T, j*W/T). Never
// invents class values.
inline std::vector<int> resize_mask_nearest(const std::vector<int>& mask, int h,
                                            int w, int target = kMaskTargetSize) {
  if (h <= 0 || w <= 0 || mask.size() != static_cast<std::size_t>(h) * w)
    throw ShapeError("mask dimensions are empty or inconsistent");
  std::vector<int> out(static_cast<std::size_t>(target) * target);
  for (int i = 0; i < target; ++i) {
    const int src_r = static_cast<int>(static_cast<long>(i) * h / target);
    for (int j = 0; j < target; ++j) {
      const int src_c = static_cast<int>(static_cast<long>(j) * w / target);
      out[static_cast<std::size_t>(i) * target + j] =
          mask[static_cast<std::size_t>(src_r) * w + src_c];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Label alignment across source databases.

inline const std::vector<std::string>& unified_label_codes() {
  static const std::vector<std::string> codes = {
      "NORM", "STACH", "SBRAD", "SARRH",   "PAC", "AFIB", "AFLT",
      "SVTAC", "PVC",   "1AVB",  "2AVB",    "3AVB", "LBBB", "RBBB",
      "LAO/LAE", "LVH", "RVH",   "AMI",     "IMI",  "ASMI"};
  return codes;
}

// Maps (source database, raw label string) to a unified code. Lookups for
// absent keys are "unmapped", a defined outcome.
struct LabelAlignmentTable {
  std::map<std::pair<std::string, std::string>, std::string> entries;

  std::optional<std::string> lookup(const std::string& source,
                                    const std::string& raw) const {
    auto it = entries.find({source, raw});
    if (it == entries.end()) return std::nullopt;
    return it->second;
  }

  // Shared-label rule: every unified code must be reachable from at least two
  // distinct sources, and codes must come from the unified set.
  void validate() const {
    const auto& codes = unified_label_codes();
    std::map<std::string, std::set<std::string>> sources_per_code;
    for (const auto& [key, code] : entries) {
      bool known = false;
      for (const auto& c : codes) known = known || c == code;
      if (!known) throw SchemaError("unknown unified label code: " + code);
      sources_per_code[code].insert(key.first);
    }
    for (const auto& c : codes) {
      auto it = sources_per_code.find(c);
      if (it == sources_per_code.end() || it->second.size() < 2)
        throw SchemaError("unified code " + c +
                          " is not shared by at least two sources");
    }
  }
};

namespace detail {

// source<TAB>raw label<TAB>unified code, one entry per line.
constexpr const char* kBuiltinLabelTable = R"(SPH	Normal	NORM
PTB-XL	Normal	NORM
SPH	Sinus tachycardia	STACH
PTB-XL	Sinus tachycardia	STACH
SXPH	Sinus tachycardia	STACH
G12EC	427084000	STACH
SPH	Sinus bradycardia	SBRAD
PTB-XL	Sinus bradycardia	SBRAD
SXPH	Sinus bradycardia	SBRAD
G12EC	426177001	SBRAD
SPH	Sinus arrhythmia	SARRH
PTB-XL	Sinus arrhythmia	SARRH
G12EC	427393009	SARRH
SPH	Atrial premature complex(es)	PAC
PTB-XL	Atrial premature complex	PAC
SPH	Atrial fibrillation	AFIB
PTB-XL	Atrial fibrillation	AFIB
SXPH	Atrial fibrillation	AFIB
G12EC	164889003	AFIB
SPH	Atrial flutter	AFLT
PTB-XL	Atrial flutter	AFLT
SXPH	Atrial flutter	AFLT
G12EC	164890007	AFLT
PTB-XL	Supraventricular tachycardia	SVTAC
SXPH	Supraventricular tachycardia	SVTAC
G12EC	426761007	SVTAC
SPH	Ventricular premature complex(es)	PVC
PTB-XL	Ventricular premature complex	PVC
G12EC	164884008	PVC
PTB-XL	First degree AV block	1AVB
SXPH	1 degree atrioventricular block	1AVB
G12EC	270492004	1AVB
SPH	Second-degree AV block, Mobitz type I (Wenckebach)	2AVB
SPH	Second-degree AV block, Mobitz type II	2AVB
SPH	2:1 AV block	2AVB
SPH	AV block, varying conduction	2AVB
SPH	AV block, advanced (high-grade)	2AVB
PTB-XL	Second degree AV block	2AVB
SXPH	2 degree atrioventricular block(Type one)	2AVB
SXPH	2 degree atrioventricular block(Type two)	2AVB
SXPH	2 degree atrioventricular block	2AVB
G12EC	54016002	2AVB
G12EC	28189009	2AVB
G12EC	164903001	2AVB
G12EC	195042002	2AVB
G12EC	284941000119107	2AVB
SPH	AV block, complete (third-degree)	3AVB
PTB-XL	Third degree AV block	3AVB
SXPH	3 degree atrioventricular block	3AVB
G12EC	27885002	3AVB
SPH	Left anterior fascicular block	LBBB
SPH	Left posterior fascicular block	LBBB
SPH	Left bundle-branch block	LBBB
PTB-XL	Left anterior fascicular block	LBBB
PTB-XL	Left posterior fascicular block	LBBB
PTB-XL	Complete left bundle branch block	LBBB
SXPH	Left bundle branch block	LBBB
G12EC	445118002	LBBB
G12EC	445211001	LBBB
G12EC	164909002	LBBB
SPH	Incomplete right bundle-branch block	RBBB
SPH	Right bundle-branch block	RBBB
PTB-XL	Incomplete right bundle branch block	RBBB
PTB-XL	Complete right bundle branch block	RBBB
SXPH	Right bundle branch block	RBBB
G12EC	713426002	RBBB
G12EC	59118001	RBBB
G12EC	164907000	RBBB
SPH	Left atrial enlargement	LAO/LAE
PTB-XL	Left atrial overload/enlargement	LAO/LAE
G12EC	67741000119109	LAO/LAE
SPH	Left ventricular hypertrophy	LVH
PTB-XL	Left ventricular hypertrophy	LVH
G12EC	164873001	LVH
SPH	Right ventricular hypertrophy	RVH
PTB-XL	Right ventricular hypertrophy	RVH
SPH	Anterior MI	AMI
PTB-XL	Anterior myocardial infarction	AMI
SPH	Inferior MI	IMI
PTB-XL	Inferior myocardial infarction	IMI
SPH	Anteroseptal MI	ASMI
PTB-XL	Anteroseptal myocardial infarction	ASMI
)";

}  // namespace detail

inline LabelAlignmentTable parse_label_table(std::istream& in) {
  LabelAlignmentTable table;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const auto t1 = line.find('\t');
    const auto t2 = line.find('\t', t1 == std::string::npos ? t1 : t1 + 1);
    if (t1 == std::string::npos || t2 == std::string::npos)
      throw ParseError("label table line " + std::to_string(line_no) +
                       ": expected source<TAB>raw<TAB>code");
    table.entries[{line.substr(0, t1), line.substr(t1 + 1, t2 - t1 - 1)}] =
        line.substr(t2 + 1);
  }
  table.validate();
  return table;
}

inline LabelAlignmentTable builtin_label_table() {
  std::istringstream in(detail::kBuiltinLabelTable);
  return parse_label_table(in);
}

inline LabelAlignmentTable load_label_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open label table: " + path);
  return parse_label_table(in);
}

// Multi-hot vector over the unified codes, or nullopt (sample dropped) when
// none of the raw labels maps. Unmapped raw labels are ignored; the result
// depends only on the set of raw labels.
inline std::optional<std::vector<int>> align_labels(const RawRecord& record,
                                                    const LabelAlignmentTable& table) {
  const auto& codes = unified_label_codes();
  std::vector<int> out(codes.size(), 0);
  bool any = false;
  for (const auto& raw : record.raw_labels) {
    const auto code = table.lookup(record.source_id, raw);
    if (!code) continue;
    for (std::size_t i = 0; i < codes.size(); ++i) {
      if (codes[i] == *code) {
        out[i] = 1;
        any = true;
        break;
      }
    }
  }
  if (!any) return std::nullopt;
  return out;
}

// ---------------------------------------------------------------------------
// CSV dataset interchange. One file per institution:
//   line 1: "# fedsim-dataset v1 task=<t> client_id=<n> completeness=<a,b>
//            grid=<HxW>"
//   line 2: header (split,feature_*/label_* or split,pixel_*/mask_*/ignore_*)
//   rows:   one sample per row, train rows before test rows, masks row-major
// Real values are written with 12 significant digits.

namespace detail {

inline std::string fmt_g12(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

inline std::map<std::string, std::string> parse_meta_line(const std::string& line) {
  std::map<std::string, std::string> kv;
  std::istringstream in(line);
  std::string tok;
  while (in >> tok) {
    const auto eq = tok.find('=');
    if (eq != std::string::npos) kv[tok.substr(0, eq)] = tok.substr(eq + 1);
  }
  return kv;
}

inline std::vector<std::string> split_csv_row(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto comma = line.find(',', start);
    if (comma == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return out;
}

inline double parse_double(const std::string& tok, int line_no) {
  char* end = nullptr;
  const double v = std::strtod(tok.c_str(), &end);
  if (end == tok.c_str() || *end != '\0')
    throw ParseError("line " + std::to_string(line_no) + ": bad number '" + tok +
                     "'");
  return v;
}

}  // namespace detail

inline void save_dataset_csv(const InstitutionData& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write dataset file: " + path);
  const Batch& train = data.train;
  const TaskKind task = train.kind;
  out << "# fedsim-dataset v1 task=" << task_name(task)
      << " client_id=" << data.client_id << " completeness=";
  bool first = true;
  for (int c : data.completeness) {
    if (!first) out << ',';
    out << c;
    first = false;
  }
  if (data.completeness.empty()) out << '-';
  out << " grid=" << train.grid_h << 'x' << train.grid_w << '\n';

  const auto write_rows = [&](const Batch& b, const char* split) {
    for (std::size_t s = 0; s < b.size(); ++s) {
      out << split;
      if (task == TaskKind::multilabel) {
        for (std::size_t c = 0; c < b.features.cols; ++c)
          out << ',' << detail::fmt_g12(b.features(s, c));
        for (std::size_t c = 0; c < b.targets.cols; ++c)
          out << ',' << static_cast<int>(b.targets(s, c));
      } else {
        for (std::size_t c = 0; c < b.images.cols; ++c)
          out << ',' << detail::fmt_g12(b.images(s, c));
        for (int v : b.masks[s]) out << ',' << v;
        if (b.has_ignore())
          for (int v : b.ignore[s]) out << ',' << v;
        else
          for (std::size_t c = 0; c < b.masks[s].size(); ++c) out << ",0";
      }
      out << '\n';
    }
  };

  // Header.
  out << "split";
  if (task == TaskKind::multilabel) {
    for (std::size_t c = 0; c < train.features.cols; ++c) out << ",feature_" << c;
    for (std::size_t c = 0; c < train.targets.cols; ++c) out << ",label_" << c;
  } else {
    const std::size_t px = train.images.cols;
    for (std::size_t c = 0; c < px; ++c) out << ",pixel_" << c;
    for (std::size_t c = 0; c < px; ++c) out << ",mask_" << c;
    for (std::size_t c = 0; c < px; ++c) out << ",ignore_" << c;
  }
  out << '\n';
  write_rows(data.train, "train");
  write_rows(data.test, "test");
  if (!out) throw IoError("failed while writing: " + path);
}

inline InstitutionData load_dataset_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset file: " + path);
  std::string line;
  int line_no = 0;
  if (!std::getline(in, line)) throw ParseError("empty dataset file: " + path);
  ++line_no;
  if (line.rfind("# fedsim-dataset v1", 0) != 0)
    throw SchemaError("not a fedsim dataset file: " + path);
  const auto meta = detail::parse_meta_line(line.substr(1));
  InstitutionData data;
  TaskKind task;
  {
    const auto it = meta.find("task");
    if (it == meta.end()) throw SchemaError("missing task in dataset metadata");
    if (it->second == "multilabel")
      task = TaskKind::multilabel;
    else if (it->second == "segmentation")
      task = TaskKind::segmentation;
    else
      throw SchemaError("unknown task: " + it->second);
  }
  if (auto it = meta.find("client_id"); it != meta.end())
    data.client_id = std::stoi(it->second);
  if (auto it = meta.find("completeness"); it != meta.end() && it->second != "-") {
    for (const auto& tok : detail::split_csv_row(it->second))
      if (!tok.empty()) data.completeness.insert(std::stoi(tok));
  }
  int grid_h = 0, grid_w = 0;
  if (auto it = meta.find("grid"); it != meta.end()) {
    const auto x = it->second.find('x');
    if (x != std::string::npos) {
      grid_h = std::stoi(it->second.substr(0, x));
      grid_w = std::stoi(it->second.substr(x + 1));
    }
  }

  if (!std::getline(in, line)) throw ParseError("missing header row: " + path);
  ++line_no;
  const auto header = detail::split_csv_row(line);
  if (header.empty() || header[0] != "split")
    throw SchemaError("header must start with 'split'");
  std::size_t n_feature = 0, n_label = 0, n_pixel = 0, n_mask = 0, n_ignore = 0;
  for (std::size_t i = 1; i < header.size(); ++i) {
    const std::string& h = header[i];
    if (h.rfind("feature_", 0) == 0)
      ++n_feature;
    else if (h.rfind("label_", 0) == 0)
      ++n_label;
    else if (h.rfind("pixel_", 0) == 0)
      ++n_pixel;
    else if (h.rfind("mask_", 0) == 0)
      ++n_mask;
    else if (h.rfind("ignore_", 0) == 0)
      ++n_ignore;
    else
      throw SchemaError("unknown column role: " + h);
  }
  if (task == TaskKind::multilabel) {
    if (n_feature == 0 || n_label == 0)
      throw SchemaError("multilabel dataset needs feature_* and label_* columns");
  } else {
    if (n_pixel == 0 || n_mask != n_pixel || n_ignore != n_pixel)
      throw SchemaError(
          "segmentation dataset needs matching pixel_*/mask_*/ignore_* columns");
    if (static_cast<std::size_t>(grid_h) * grid_w != n_pixel)
      throw SchemaError("grid metadata does not match pixel column count");
  }

  struct Row {
    bool is_test;
    std::vector<double> values;
  };
  std::vector<Row> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = detail::split_csv_row(line);
    if (cells.size() != header.size())
      throw ParseError("line " + std::to_string(line_no) + ": expected " +
                       std::to_string(header.size()) + " cells, got " +
                       std::to_string(cells.size()));
    Row row;
    if (cells[0] == "train")
      row.is_test = false;
    else if (cells[0] == "test")
      row.is_test = true;
    else
      throw ParseError("line " + std::to_string(line_no) + ": bad split '" +
                       cells[0] + "'");
    row.values.reserve(cells.size() - 1);
    for (std::size_t i = 1; i < cells.size(); ++i)
      row.values.push_back(detail::parse_double(cells[i], line_no));
    rows.push_back(std::move(row));
  }

  const auto build = [&](bool want_test) {
    Batch b;
    b.kind = task;
    std::size_t count = 0;
    for (const Row& r : rows)
      if (r.is_test == want_test) ++count;
    if (task == TaskKind::multilabel) {
      b.features = Matrix(count, n_feature);
      b.targets = Matrix(count, n_label);
      std::size_t s = 0;
      for (const Row& r : rows) {
        if (r.is_test != want_test) continue;
        for (std::size_t c = 0; c < n_feature; ++c) b.features(s, c) = r.values[c];
        for (std::size_t c = 0; c < n_label; ++c)
          b.targets(s, c) = r.values[n_feature + c];
        ++s;
      }
    } else {
      b.grid_h = grid_h;
      b.grid_w = grid_w;
      b.images = Matrix(count, n_pixel);
      std::size_t s = 0;
      for (const Row& r : rows) {
        if (r.is_test != want_test) continue;
        for (std::size_t c = 0; c < n_pixel; ++c) b.images(s, c) = r.values[c];
        std::vector<int> mask(n_pixel), ign(n_pixel);
        for (std::size_t c = 0; c < n_pixel; ++c) {
          mask[c] = static_cast<int>(r.values[n_pixel + c]);
          ign[c] = static_cast<int>(r.values[2 * n_pixel + c]);
        }
        b.masks.push_back(std::move(mask));
        b.ignore.push_back(std::move(ign));
        ++s;
      }
    }
    return b;
  };
  data.train = build(false);
  data.test = build(true);
  return data;
}

}  // namespace fedsim
