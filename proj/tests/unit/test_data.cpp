#include "hfz/data.hpp"
#include "hfz/errors.hpp"

#include <doctest.h>
#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <set>

using namespace hfz;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

void write(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream(p) << text;
}

// A hand-written 2 class x 3 grasp dataset with 2 frames of 2x3 and 3 joint samples.
void write_tiny_dataset(const fs::path& dir, int tactile_rows = 4) {
  nlohmann::json doc = {{"format", "hfz-grasp-dataset"}, {"version", 1},
                        {"tactile_height", 2},           {"tactile_width", 3},
                        {"tactile_frames", 2},           {"kinesthetic_samples", 3},
                        {"class_names", {"cup", "ball"}}, {"grasps", nlohmann::json::array()}};
  for (int i = 0; i < 6; ++i) {
    const std::string id = "g" + std::to_string(i);
    doc["grasps"].push_back({{"grasp_id", id},
                             {"label", i < 3 ? "cup" : "ball"},
                             {"tactile_file", "t/" + id + ".csv"},
                             {"kinesthetic_file", "k/" + id + ".csv"}});
    std::string tac;
    for (int r = 0; r < tactile_rows; ++r) {
      tac += std::to_string(i) + "," + std::to_string(r) + ",0.5\n";
    }
    write(dir / "t" / (id + ".csv"), tac);
    write(dir / "k" / (id + ".csv"), "theta_al,theta_ar,theta_2l,theta_2r\n1,2,3,4\n5,6,7,8\n9,10,11," +
                                         std::to_string(i) + "\n");
  }
  write(dir / "manifest.json", doc.dump(2));
}

void require_same(const Dataset& a, const Dataset& b) {
  REQUIRE(a.class_names == b.class_names);
  REQUIRE(a.grasps.size() == b.grasps.size());
  CHECK(a.tactile_height == b.tactile_height);
  CHECK(a.tactile_width == b.tactile_width);
  CHECK(a.tactile_frames == b.tactile_frames);
  CHECK(a.kinesthetic_samples == b.kinesthetic_samples);
  for (std::size_t i = 0; i < a.grasps.size(); ++i) {
    CHECK(a.grasps[i].grasp_id == b.grasps[i].grasp_id);
    CHECK(a.grasps[i].label == b.grasps[i].label);
    CHECK(a.grasps[i].tactile.frames == b.grasps[i].tactile.frames);
    CHECK(a.grasps[i].kinesthetic.samples == b.grasps[i].kinesthetic.samples);
  }
}

Dataset counting_dataset(Index classes, Index per_class) {
  Dataset ds;
  ds.tactile_height = ds.tactile_width = 2;
  ds.tactile_frames = 1;
  ds.kinesthetic_samples = 2;
  for (Index c = 0; c < classes; ++c) ds.class_names.push_back("c" + std::to_string(c));
  for (Index k = 0; k < per_class * classes; ++k) {
    Grasp g;
    g.grasp_id = "g" + std::to_string(k);
    g.label = k % classes;
    g.tactile = TactileSequence{2, 2, Eigen::MatrixXd::Constant(1, 4, double(k))};
    g.kinesthetic.samples = Eigen::MatrixXd::Constant(2, 4, double(k));
    ds.grasps.push_back(g);
  }
  return ds;
}

}  // namespace

TEST_CASE("load a hand-written dataset") {
  TempDir tmp("hfz_test_data_load");
  write_tiny_dataset(tmp.path);
  const Dataset ds = load_dataset(tmp.path);
  CHECK(ds.grasps.size() == 6);
  CHECK(ds.classes() == 2);
  CHECK(ds.grasps[4].label == 1);
  CHECK(ds.grasps[4].kinesthetic.samples(2, 3) == 4.0);
  // Frame 1, row 0 is file row 2.
  CHECK(ds.grasps[4].tactile.frames(1, 0) == 4.0);
  CHECK(ds.grasps[4].tactile.frames(1, 1) == 2.0);
  CHECK(ds.indices_of_class(1) == std::vector<Index>{3, 4, 5});
  const Dataset again = load_dataset(tmp.path / "manifest.json");
  require_same(ds, again);
}

TEST_CASE("loader errors") {
  TempDir tmp("hfz_test_data_errors");
  SUBCASE("wrong frame count") {
    write_tiny_dataset(tmp.path, 2);
    CHECK_THROWS_AS(load_dataset(tmp.path), FormatError);
  }
  SUBCASE("missing file names the grasp") {
    write_tiny_dataset(tmp.path);
    fs::remove(tmp.path / "k" / "g2.csv");
    try {
      load_dataset(tmp.path);
      FAIL("expected an error");
    } catch (const IoError& e) {
      CHECK(std::string(e.what()).find("g2") != std::string::npos);
    }
  }
  SUBCASE("unknown label") {
    write_tiny_dataset(tmp.path);
    auto doc = nlohmann::json::parse(std::ifstream(tmp.path / "manifest.json"));
    doc["grasps"][1]["label"] = "spoon";
    write(tmp.path / "manifest.json", doc.dump());
    CHECK_THROWS_AS(load_dataset(tmp.path), FormatError);
  }
  SUBCASE("malformed number") {
    write_tiny_dataset(tmp.path);
    write(tmp.path / "k" / "g0.csv", "theta_al,theta_ar,theta_2l,theta_2r\n1,2,x,4\n5,6,7,8\n9,10,11,0\n");
    CHECK_THROWS_AS(load_dataset(tmp.path), FormatError);
  }
  SUBCASE("no manifest") { CHECK_THROWS_AS(load_dataset(tmp.path), IoError); }
}

TEST_CASE("save and load round trip bit exactly") {
  TempDir tmp("hfz_test_data_roundtrip");
  SyntheticConfig cfg;
  cfg.classes = 3;
  cfg.grasps_per_class = 4;
  cfg.tactile_frames = 3;
  cfg.kinesthetic_samples = 7;
  cfg.height = 5;
  cfg.width = 6;
  cfg.seed = 4;
  const Dataset ds = gen_synthetic(cfg);
  save_dataset(ds, tmp.path / "a");
  const Dataset loaded = load_dataset(tmp.path / "a");
  require_same(ds, loaded);
  save_dataset(loaded, tmp.path / "b");
  require_same(loaded, load_dataset(tmp.path / "b"));
}

TEST_CASE("convert an upstream export") {
  TempDir tmp("hfz_test_data_convert");
  const fs::path up = tmp.path / "up";
  // Nested layout, flattened frames, transposed kinesthetic data.
  write(up / "apple" / "trial1" / "tactile.csv", "1,2,3,4,5,6\n0,0,0,0,0,-1\n");
  write(up / "apple" / "trial1" / "kinesthetic.csv", "1,2,3\n4,5,6\n7,8,9\n10,11,12\n");
  // Flat layout, stacked frames, header row.
  write(up / "brick" / "t9_tactile.csv", "1,2,3\n4,5,6\n7,8,9\n1,1,1\n");
  write(up / "brick" / "t9_kinesthetic.csv", "a,b,c,d\n1,2,3,4\n5,6,7,8\n9,9,9,9\n");
  const Dataset ds = convert_upstream(up, 2, 3);
  REQUIRE(ds.grasps.size() == 2);
  CHECK(ds.class_names == std::vector<std::string>{"apple", "brick"});
  CHECK(ds.tactile_frames == 2);
  CHECK(ds.kinesthetic_samples == 3);
  CHECK(ds.grasps[0].kinesthetic.samples(0, 3) == 10.0);
  CHECK(ds.grasps[0].tactile.frames(1, 5) == 0.0);
  CHECK(ds.grasps[1].tactile.frames(1, 0) == 7.0);
  save_dataset(ds, tmp.path / "out");
  require_same(ds, load_dataset(tmp.path / "out"));

  CHECK_THROWS_AS(convert_upstream(tmp.path / "nowhere", 2, 3), IoError);
  write(up / "cup" / "x_tactile.csv", "1,2,3\n4,5,6\n");
  CHECK_THROWS_AS(convert_upstream(up, 2, 3), IoError);
}

TEST_CASE("split counts for both protocols") {
  const Dataset ds = counting_dataset(4, 60);
  const SplitPlan bayes = make_split(ds, Protocol::Bayesian, 5);
  const SplitPlan neural = make_split(ds, Protocol::Neural, 5);
  for (Index c = 0; c < 4; ++c) {
    const ClassSplit& b = bayes.per_class[std::size_t(c)];
    CHECK(b.train.size() == 12);
    CHECK(b.val.size() == 3);
    CHECK(b.fusion_train.empty());
    CHECK(b.test.size() == 45);
    const ClassSplit& n = neural.per_class[std::size_t(c)];
    CHECK(n.train.size() == 8);
    CHECK(n.val.size() == 2);
    CHECK(n.fusion_train.size() == 5);
    CHECK(n.test.size() == 45);

    std::set<Index> all;
    for (const auto* part : {&n.train, &n.val, &n.fusion_train, &n.test}) {
      for (Index i : *part) {
        CHECK(ds.grasps[std::size_t(i)].label == c);
        all.insert(i);
      }
    }
    CHECK(all.size() == 60);
    CHECK(b.test == n.test);
  }
  std::vector<Index> bt = bayes.training_portion(), nt = neural.training_portion();
  std::sort(bt.begin(), bt.end());
  std::sort(nt.begin(), nt.end());
  CHECK(bt == nt);
}

TEST_CASE("splits are deterministic and seed dependent") {
  const Dataset ds = counting_dataset(3, 60);
  const SplitPlan a = make_split(ds, Protocol::Neural, 9), b = make_split(ds, Protocol::Neural, 9);
  CHECK(a.train() == b.train());
  CHECK(a.val() == b.val());
  CHECK(a.fusion_train() == b.fusion_train());
  CHECK(a.test() == b.test());
  CHECK(make_split(ds, Protocol::Neural, 10).test() != a.test());
}

TEST_CASE("split errors") {
  const Dataset ds = counting_dataset(2, 50);
  CHECK_THROWS_AS(make_split(ds, Protocol::Bayesian, 1), std::invalid_argument);
  try {
    make_split(ds, Protocol::Bayesian, 1);
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("60") != std::string::npos);
  }
  SplitCounts small{4, 2, 3, 0.25};
  const SplitPlan p = make_split(counting_dataset(2, 7), Protocol::Neural, 1, small);
  CHECK(p.per_class[0].train.size() + p.per_class[0].val.size() == 2);
  CHECK(parse_protocol("neural") == Protocol::Neural);
  CHECK(to_string(Protocol::Bayesian) == "bayesian");
  CHECK_THROWS_AS(parse_protocol("both"), std::invalid_argument);
}

TEST_CASE("normalization examples") {
  Dataset ds = counting_dataset(1, 3);
  ds.grasps[0].tactile.frames << 0, 50, 100, 20;
  ds.grasps[1].tactile.frames << 10, 10, 10, 10;
  ds.grasps[2].tactile.frames << 120, 1000, -200, 50;
  for (auto& g : ds.grasps) g.kinesthetic.samples.col(2).setConstant(7.0);
  const NormalizationStats stats = compute_normalization(ds, {0, 1});
  CHECK(stats.tactile_min == 0.0);
  CHECK(stats.tactile_max == 100.0);
  REQUIRE(stats.warnings.size() == 1);
  CHECK(stats.warnings[0].find("theta_2l") != std::string::npos);

  const Grasp train = apply_normalization(stats, ds.grasps[0]);
  CHECK(train.tactile.frames(0, 1) == 0.5);
  const Grasp test = apply_normalization(stats, ds.grasps[2]);
  CHECK(test.tactile.frames(0, 0) == doctest::Approx(1.2).epsilon(1e-15));
  CHECK(test.tactile.frames(0, 1) == 1.5);
  CHECK(test.tactile.frames(0, 2) == -0.5);
  CHECK(test.kinesthetic.samples.col(2).isConstant(0.5));
  // joint 0 spans [0, 1] on training grasps 0 and 1
  CHECK(test.kinesthetic.samples(0, 0) == 1.5);
}

TEST_CASE("normalization uses training grasps only") {
  SyntheticConfig cfg;
  cfg.classes = 2;
  cfg.grasps_per_class = 20;
  cfg.tactile_frames = 2;
  cfg.kinesthetic_samples = 5;
  cfg.height = cfg.width = 4;
  Dataset ds = gen_synthetic(cfg);
  const SplitCounts counts{6, 2, 14, 0.2};
  const SplitPlan plan = make_split(ds, Protocol::Neural, 3, counts);
  const Dataset a = normalize(ds, plan);
  for (Index i : plan.test()) {
    ds.grasps[std::size_t(i)].tactile.frames.array() += 1e6;
    ds.grasps[std::size_t(i)].kinesthetic.samples.array() -= 1e3;
  }
  const Dataset b = normalize(ds, plan);
  CHECK(a.normalization->tactile_min == b.normalization->tactile_min);
  CHECK(a.normalization->tactile_max == b.normalization->tactile_max);
  CHECK(a.normalization->joint_min == b.normalization->joint_min);
  CHECK(a.normalization->joint_max == b.normalization->joint_max);
  for (Index i : plan.training_portion()) {
    CHECK(a.grasps[std::size_t(i)].tactile.frames == b.grasps[std::size_t(i)].tactile.frames);
  }
}

TEST_CASE("synthetic generator") {
  SyntheticConfig cfg;
  cfg.classes = 3;
  cfg.grasps_per_class = 5;
  cfg.tactile_frames = 4;
  cfg.kinesthetic_samples = 9;
  cfg.height = 8;
  cfg.width = 10;
  cfg.seed = 17;

  SUBCASE("deterministic") { require_same(gen_synthetic(cfg), gen_synthetic(cfg)); }
  SUBCASE("noise free grasps repeat within a class") {
    cfg.noise = 0.0;
    const Dataset ds = gen_synthetic(cfg);
    for (const Grasp& g : ds.grasps) {
      const Grasp& first = ds.grasps[std::size_t(g.label * cfg.grasps_per_class)];
      CHECK(g.tactile.frames == first.tactile.frames);
      CHECK(g.kinesthetic.samples == first.kinesthetic.samples);
    }
    CHECK(ds.grasps[0].tactile.frames != ds.grasps[5].tactile.frames);
  }
  SUBCASE("shapes and ranges") {
    const Dataset ds = gen_synthetic(cfg);
    CHECK(ds.grasps.size() == 15);
    for (const Grasp& g : ds.grasps) {
      CHECK(g.tactile.frames.rows() == 4);
      CHECK(g.tactile.frames.cols() == 80);
      CHECK(g.tactile.frames.minCoeff() >= 0.0);
      CHECK(g.kinesthetic.samples.rows() == 9);
      CHECK(g.kinesthetic.samples.allFinite());
    }
  }
  SUBCASE("invalid configurations") {
    cfg.classes = 1;
    CHECK_THROWS_AS(gen_synthetic(cfg), std::invalid_argument);
    cfg.classes = 2;
    cfg.noise = -1.0;
    CHECK_THROWS_AS(gen_synthetic(cfg), std::invalid_argument);
    cfg.noise = 1.0;
    cfg.profiles = {ObjectProfile{}};
    CHECK_THROWS_AS(gen_synthetic(cfg), std::invalid_argument);
  }
}

TEST_CASE("stiffness is separable from the kinesthetic trace alone") {
  SyntheticConfig cfg;
  cfg.classes = 2;
  cfg.grasps_per_class = 200;
  cfg.tactile_frames = 1;
  cfg.kinesthetic_samples = 41;
  cfg.height = cfg.width = 3;
  cfg.seed = 99;
  cfg.profiles = {ObjectProfile{0.1, 0.5, 0}, ObjectProfile{1.0, 0.5, 0}};
  // The plateau sample; the release phase returns every grasp to the open pose.
  const Index hold = 20;
  auto angle = [&](const Grasp& g) {
    return 0.5 * (g.kinesthetic.samples(hold, 0) + g.kinesthetic.samples(hold, 1));
  };

  SyntheticConfig mean_cfg = cfg;
  mean_cfg.noise = 0.0;
  mean_cfg.grasps_per_class = 1;
  const Dataset means = gen_synthetic(mean_cfg);
  const double soft = angle(means.grasps[0]), stiff = angle(means.grasps[1]);
  REQUIRE(soft > stiff + 10.0);
  const double threshold = 0.5 * (soft + stiff);

  const Dataset ds = gen_synthetic(cfg);
  int correct = 0;
  for (const Grasp& g : ds.grasps) correct += (angle(g) > threshold ? 0 : 1) == g.label;
  CHECK(double(correct) / double(ds.grasps.size()) >= 0.99);
}
