#include "hfz/data.hpp"

#include "hfz/errors.hpp"
#include "hfz/random.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace hfz {
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::string shape_string(Index rows, Index cols) {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::string sanitize(const std::string& id) {
  std::string out = id;
  for (char& c : out) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                    c == '-' || c == '_' || c == '.';
    if (!ok) c = '_';
  }
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

std::string matrix_csv(const Eigen::MatrixXd& m, const char* header) {
  std::string out;
  if (header) {
    out += header;
    out += '\n';
  }
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) {
      if (c) out += ',';
      out += format_double(m(r, c));
    }
    out += '\n';
  }
  return out;
}

// [T, H*W] frames <-> [T*H, W] stacked images; pixel (y, x) is column y*W + x.
Eigen::MatrixXd stack_frames(const TactileSequence& seq) {
  Eigen::MatrixXd stacked(seq.steps() * seq.height, seq.width);
  for (Index t = 0; t < seq.steps(); ++t)
    for (Index y = 0; y < seq.height; ++y)
      for (Index x = 0; x < seq.width; ++x)
        stacked(t * seq.height + y, x) = seq.frames(t, y * seq.width + x);
  return stacked;
}

TactileSequence unstack_frames(const Eigen::MatrixXd& stacked, Index height, Index width) {
  TactileSequence seq{height, width, Eigen::MatrixXd(stacked.rows() / height, height * width)};
  for (Index t = 0; t < seq.steps(); ++t)
    for (Index y = 0; y < height; ++y)
      for (Index x = 0; x < width; ++x) seq.frames(t, y * width + x) = stacked(t * height + y, x);
  return seq;
}

std::vector<Index> gather(const std::vector<ClassSplit>& split,
                          std::vector<Index> ClassSplit::*member) {
  std::vector<Index> out;
  for (const auto& c : split) out.insert(out.end(), (c.*member).begin(), (c.*member).end());
  return out;
}

}  // namespace

std::vector<Index> Dataset::indices_of_class(Index label) const {
  std::vector<Index> out;
  for (Index i = 0; i < static_cast<Index>(grasps.size()); ++i) {
    if (grasps[i].label == label) out.push_back(i);
  }
  return out;
}

std::string format_double(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

Eigen::MatrixXd read_csv_matrix(const fs::path& path, bool skip_header) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  bool first = true;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (first && skip_header) {
      first = false;
      continue;
    }
    first = false;
    if (trim(line).empty()) continue;
    std::vector<double> row;
    std::string_view rest(line);
    while (true) {
      const auto comma = rest.find(',');
      const std::string cell = trim(rest.substr(0, comma));
      double v = 0.0;
      const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (cell.empty() || res.ec != std::errc() || res.ptr != cell.data() + cell.size()) {
        throw FormatError(path.string() + ":" + std::to_string(line_no) + ": invalid number '" +
                          cell + "'");
      }
      row.push_back(v);
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                        std::to_string(rows.front().size()) + " columns, got " +
                        std::to_string(row.size()));
    }
    rows.push_back(std::move(row));
  }
  Eigen::MatrixXd m(static_cast<Index>(rows.size()), rows.empty() ? 0 : static_cast<Index>(rows[0].size()));
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) m(r, c) = rows[r][c];
  }
  return m;
}

Dataset load_dataset(const fs::path& manifest_path) {
  const fs::path manifest = fs::is_directory(manifest_path) ? manifest_path / kManifestName
                                                            : manifest_path;
  std::ifstream in(manifest);
  if (!in) throw IoError("cannot open manifest " + manifest.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw FormatError("manifest " + manifest.string() + " does not parse: " + e.what());
  }
  const fs::path base = manifest.parent_path();

  Dataset ds;
  try {
    ds.class_names = doc.at("class_names").get<std::vector<std::string>>();
    ds.tactile_height = doc.value("tactile_height", Index{28});
    ds.tactile_width = doc.value("tactile_width", Index{50});
    ds.tactile_frames = doc.at("tactile_frames").get<Index>();
    ds.kinesthetic_samples = doc.at("kinesthetic_samples").get<Index>();
  } catch (const json::exception& e) {
    throw FormatError("manifest " + manifest.string() + ": " + e.what());
  }
  if (ds.class_names.empty() || ds.tactile_height <= 0 || ds.tactile_width <= 0 ||
      ds.tactile_frames <= 0 || ds.kinesthetic_samples <= 0) {
    throw FormatError("manifest " + manifest.string() + ": class list and shapes must be non-empty");
  }
  std::map<std::string, Index> label_of;
  for (Index i = 0; i < ds.classes(); ++i) {
    if (!label_of.emplace(ds.class_names[i], i).second) {
      throw FormatError("manifest: duplicate class name '" + ds.class_names[i] + "'");
    }
  }

  if (!doc.contains("grasps") || !doc["grasps"].is_array()) {
    throw FormatError("manifest " + manifest.string() + ": missing grasps array");
  }
  std::set<std::string> seen;
  for (const auto& entry : doc["grasps"]) {
    Grasp g;
    std::string label, tactile_file, kinesthetic_file;
    try {
      g.grasp_id = entry.at("grasp_id").get<std::string>();
      label = entry.at("label").get<std::string>();
      tactile_file = entry.at("tactile_file").get<std::string>();
      kinesthetic_file = entry.at("kinesthetic_file").get<std::string>();
    } catch (const json::exception& e) {
      throw FormatError("manifest grasp entry: " + std::string(e.what()));
    }
    if (!seen.insert(g.grasp_id).second) {
      throw FormatError("manifest: duplicate grasp_id '" + g.grasp_id + "'");
    }
    const auto found = label_of.find(label);
    if (found == label_of.end()) {
      throw FormatError("grasp " + g.grasp_id + ": unknown label '" + label + "'");
    }
    g.label = found->second;

    for (const fs::path& file : {base / tactile_file, base / kinesthetic_file}) {
      if (!fs::exists(file)) {
        throw IoError("grasp " + g.grasp_id + ": missing file " + file.string());
      }
    }
    const Eigen::MatrixXd kin = read_csv_matrix(base / kinesthetic_file, true);
    if (kin.rows() != ds.kinesthetic_samples || kin.cols() != kJointCount) {
      throw FormatError("grasp " + g.grasp_id + ": kinesthetic shape " +
                        shape_string(kin.rows(), kin.cols()) + ", expected " +
                        shape_string(ds.kinesthetic_samples, kJointCount));
    }
    const Eigen::MatrixXd tac = read_csv_matrix(base / tactile_file, false);
    if (tac.rows() != ds.tactile_frames * ds.tactile_height || tac.cols() != ds.tactile_width) {
      throw FormatError("grasp " + g.grasp_id + ": tactile shape " +
                        shape_string(tac.rows(), tac.cols()) + ", expected " +
                        shape_string(ds.tactile_frames * ds.tactile_height, ds.tactile_width) +
                        " (" + std::to_string(ds.tactile_frames) + " frames of " +
                        shape_string(ds.tactile_height, ds.tactile_width) + ")");
    }
    if ((tac.array() < 0.0).any()) {
      throw FormatError("grasp " + g.grasp_id + ": negative tactile pressure");
    }
    g.kinesthetic.samples = kin;
    g.tactile = unstack_frames(tac, ds.tactile_height, ds.tactile_width);
    ds.grasps.push_back(std::move(g));
  }
  return ds;
}

void save_dataset(const Dataset& ds, const fs::path& directory) {
  fs::create_directories(directory / "tactile");
  fs::create_directories(directory / "kinesthetic");
  json doc;
  doc["format"] = "hfz-grasp-dataset";
  doc["version"] = 1;
  doc["tactile_height"] = ds.tactile_height;
  doc["tactile_width"] = ds.tactile_width;
  doc["tactile_frames"] = ds.tactile_frames;
  doc["kinesthetic_samples"] = ds.kinesthetic_samples;
  doc["class_names"] = ds.class_names;
  doc["grasps"] = json::array();
  for (std::size_t i = 0; i < ds.grasps.size(); ++i) {
    const Grasp& g = ds.grasps[i];
    if (g.label < 0 || g.label >= ds.classes()) {
      throw std::invalid_argument("save_dataset: grasp " + g.grasp_id + " has invalid label");
    }
    const std::string stem = std::to_string(i) + "_" + sanitize(g.grasp_id) + ".csv";
    const std::string tac_rel = "tactile/" + stem;
    const std::string kin_rel = "kinesthetic/" + stem;
    write_text(directory / tac_rel, matrix_csv(stack_frames(g.tactile), nullptr));
    write_text(directory / kin_rel, matrix_csv(g.kinesthetic.samples, kKinestheticHeader));
    doc["grasps"].push_back({{"grasp_id", g.grasp_id},
                             {"label", ds.class_names[g.label]},
                             {"tactile_file", tac_rel},
                             {"kinesthetic_file", kin_rel}});
  }
  write_text(directory / kManifestName, doc.dump(2) + "\n");
}

Dataset convert_upstream(const fs::path& root, Index height, Index width) {
  if (!fs::is_directory(root)) throw IoError("upstream directory not found: " + root.string());
  std::vector<fs::path> class_dirs;
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.is_directory()) class_dirs.push_back(e.path());
  }
  std::sort(class_dirs.begin(), class_dirs.end());
  if (class_dirs.empty()) throw FormatError("upstream directory has no class folders");

  Dataset ds;
  ds.tactile_height = height;
  ds.tactile_width = width;
  ds.tactile_frames = -1;
  ds.kinesthetic_samples = -1;

  auto load_pair = [&](const std::string& id, Index label, const fs::path& tac_file,
                       const fs::path& kin_file) {
    Grasp g;
    g.grasp_id = id;
    g.label = label;
    // Kinesthetic: optional header; K x 4 or 4 x K.
    std::ifstream probe(kin_file);
    std::string first_line;
    std::getline(probe, first_line);
    const bool header = first_line.find_first_of("abcdefghijklmnopqrstuvwxyz_") != std::string::npos;
    Eigen::MatrixXd kin = read_csv_matrix(kin_file, header);
    if (kin.cols() != kJointCount && kin.rows() == kJointCount) kin.transposeInPlace();
    if (kin.cols() != kJointCount) {
      throw FormatError("grasp " + id + ": kinesthetic data is " + shape_string(kin.rows(), kin.cols()) +
                        ", expected K x 4");
    }
    Eigen::MatrixXd tac = read_csv_matrix(tac_file, false);
    if (tac.cols() == height * width) {
      g.tactile = TactileSequence{height, width, tac};
    } else if (tac.cols() == width && tac.rows() % height == 0) {
      g.tactile = unstack_frames(tac, height, width);
    } else {
      throw FormatError("grasp " + id + ": tactile data is " + shape_string(tac.rows(), tac.cols()) +
                        ", expected rows of " + std::to_string(height * width) +
                        " or stacked " + shape_string(height, width) + " frames");
    }
    g.tactile.frames = g.tactile.frames.cwiseMax(0.0);
    g.kinesthetic.samples = kin;
    if (ds.tactile_frames < 0) ds.tactile_frames = g.tactile.steps();
    if (ds.kinesthetic_samples < 0) ds.kinesthetic_samples = kin.rows();
    if (g.tactile.steps() != ds.tactile_frames || kin.rows() != ds.kinesthetic_samples) {
      throw FormatError("grasp " + id + ": sequence lengths differ from the first grasp");
    }
    ds.grasps.push_back(std::move(g));
  };

  for (const auto& dir : class_dirs) {
    const Index label = ds.classes();
    const std::string class_name = dir.filename().string();
    ds.class_names.push_back(class_name);
    std::vector<fs::path> entries;
    for (const auto& e : fs::directory_iterator(dir)) entries.push_back(e.path());
    std::sort(entries.begin(), entries.end());
    for (const auto& p : entries) {
      if (fs::is_directory(p)) {
        const fs::path tac = p / "tactile.csv";
        const fs::path kin = p / "kinesthetic.csv";
        if (fs::exists(tac) && fs::exists(kin)) {
          load_pair(class_name + "/" + p.filename().string(), label, tac, kin);
        }
        continue;
      }
      const std::string name = p.filename().string();
      const std::string suffix = "_tactile.csv";
      if (name.size() > suffix.size() &&
          name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0) {
        const std::string stem = name.substr(0, name.size() - suffix.size());
        const fs::path kin = dir / (stem + "_kinesthetic.csv");
        if (!fs::exists(kin)) {
          throw IoError("grasp " + class_name + "/" + stem + ": missing " + kin.string());
        }
        load_pair(class_name + "/" + stem, label, p, kin);
      }
    }
  }
  if (ds.grasps.empty()) throw FormatError("no grasps found under " + root.string());
  return ds;
}

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------

std::string to_string(Protocol p) { return p == Protocol::Bayesian ? "bayesian" : "neural"; }

Protocol parse_protocol(const std::string& name) {
  if (name == "bayesian") return Protocol::Bayesian;
  if (name == "neural") return Protocol::Neural;
  throw std::invalid_argument("unknown protocol '" + name + "' (expected bayesian or neural)");
}

Index SplitCounts::val(Protocol p) const {
  return static_cast<Index>(std::lround(val_fraction * static_cast<double>(base_train(p))));
}

std::vector<Index> SplitPlan::train() const { return gather(per_class, &ClassSplit::train); }
std::vector<Index> SplitPlan::val() const { return gather(per_class, &ClassSplit::val); }
std::vector<Index> SplitPlan::fusion_train() const {
  return gather(per_class, &ClassSplit::fusion_train);
}
std::vector<Index> SplitPlan::test() const { return gather(per_class, &ClassSplit::test); }

std::vector<Index> SplitPlan::training_portion() const {
  std::vector<Index> out;
  for (const auto& c : per_class) {
    out.insert(out.end(), c.train.begin(), c.train.end());
    out.insert(out.end(), c.val.begin(), c.val.end());
    out.insert(out.end(), c.fusion_train.begin(), c.fusion_train.end());
  }
  return out;
}

SplitPlan make_split(const Dataset& ds, Protocol protocol, std::uint64_t seed,
                     const SplitCounts& counts) {
  if (counts.train <= 0 || counts.test <= 0 || counts.fusion < 0 || counts.val_fraction < 0.0 ||
      counts.val_fraction >= 1.0) {
    throw std::invalid_argument("make_split: invalid split counts");
  }
  if (protocol == Protocol::Neural && (counts.fusion <= 0 || counts.base_train(protocol) <= 0)) {
    throw std::invalid_argument("make_split: neural protocol needs fusion and base-train examples");
  }
  if (counts.fit(protocol) <= 0) {
    throw std::invalid_argument("make_split: no training examples left after validation");
  }
  const Index required = counts.train + counts.test;
  SplitPlan plan;
  plan.protocol = protocol;
  plan.seed = seed;
  Rng rng(seed);
  for (Index label = 0; label < ds.classes(); ++label) {
    std::vector<Index> pool = ds.indices_of_class(label);
    if (static_cast<Index>(pool.size()) < required) {
      throw std::invalid_argument(
          "make_split: class '" + ds.class_names[label] + "' has " + std::to_string(pool.size()) +
          " grasps; " + to_string(protocol) + " protocol requires " + std::to_string(required) +
          " (" + std::to_string(counts.train) + " training + " + std::to_string(counts.test) +
          " test)");
    }
    rng.shuffle(pool);
    ClassSplit split;
    const Index fit = counts.fit(protocol);
    const Index base = counts.base_train(protocol);
    auto take = [&](Index from, Index to) {
      return std::vector<Index>(pool.begin() + from, pool.begin() + to);
    };
    split.train = take(0, fit);
    split.val = take(fit, base);
    split.fusion_train = take(base, counts.train);
    split.test = take(counts.train, counts.train + counts.test);
    plan.per_class.push_back(std::move(split));
  }
  return plan;
}

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

NormalizationStats compute_normalization(const Dataset& ds, const std::vector<Index>& indices) {
  if (indices.empty()) {
    throw std::invalid_argument("normalize: no training grasps to compute statistics from");
  }
  NormalizationStats stats;
  stats.tactile_min = std::numeric_limits<double>::infinity();
  stats.tactile_max = -std::numeric_limits<double>::infinity();
  stats.joint_min.setConstant(std::numeric_limits<double>::infinity());
  stats.joint_max.setConstant(-std::numeric_limits<double>::infinity());
  for (Index i : indices) {
    const Grasp& g = ds.grasps.at(i);
    stats.tactile_min = std::min(stats.tactile_min, g.tactile.frames.minCoeff());
    stats.tactile_max = std::max(stats.tactile_max, g.tactile.frames.maxCoeff());
    stats.joint_min = stats.joint_min.cwiseMin(g.kinesthetic.samples.colwise().minCoeff().transpose());
    stats.joint_max = stats.joint_max.cwiseMax(g.kinesthetic.samples.colwise().maxCoeff().transpose());
  }
  if (stats.tactile_max == stats.tactile_min) {
    stats.warnings.push_back("tactile values are constant on the training portion; mapped to 0.5");
  }
  static const char* joints[4] = {"theta_al", "theta_ar", "theta_2l", "theta_2r"};
  for (int j = 0; j < 4; ++j) {
    if (stats.joint_max(j) == stats.joint_min(j)) {
      stats.warnings.push_back(std::string("joint column ") + joints[j] +
                               " is constant on the training portion; mapped to 0.5");
    }
  }
  return stats;
}

Grasp apply_normalization(const NormalizationStats& stats, const Grasp& grasp) {
  auto scale = [](const auto& values, double lo, double hi) -> Eigen::MatrixXd {
    if (hi == lo) return Eigen::MatrixXd::Constant(values.rows(), values.cols(), 0.5);
    return ((values.array() - lo) / (hi - lo))
        .cwiseMax(kNormalizedClampLow)
        .cwiseMin(kNormalizedClampHigh)
        .matrix();
  };
  Grasp out = grasp;
  out.tactile.frames = scale(grasp.tactile.frames, stats.tactile_min, stats.tactile_max);
  for (int j = 0; j < 4; ++j) {
    out.kinesthetic.samples.col(j) =
        scale(grasp.kinesthetic.samples.col(j), stats.joint_min(j), stats.joint_max(j));
  }
  return out;
}

Dataset normalize(const Dataset& ds, const SplitPlan& plan) {
  if (static_cast<Index>(plan.per_class.size()) != ds.classes()) {
    throw std::invalid_argument("normalize: split plan does not match dataset");
  }
  Dataset out;
  out.class_names = ds.class_names;
  out.tactile_height = ds.tactile_height;
  out.tactile_width = ds.tactile_width;
  out.tactile_frames = ds.tactile_frames;
  out.kinesthetic_samples = ds.kinesthetic_samples;
  out.normalization = compute_normalization(ds, plan.training_portion());
  out.grasps.reserve(ds.grasps.size());
  for (const Grasp& g : ds.grasps) out.grasps.push_back(apply_normalization(*out.normalization, g));
  return out;
}

}  // namespace hfz
