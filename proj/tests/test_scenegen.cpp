#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "edgenav/scenegen.hpp"

using namespace edgenav;

namespace {

SceneSpec centered_box_scene() {
  SceneSpec spec;
  spec.room.seed = 42;
  spec.camera = {5.0, 5.0, 0.6, 0.0, 60.0};
  spec.boxes.push_back({0, 8.0, 5.0, 0.8});  // red box straight ahead at 3m
  spec.image_size = 96;
  return spec;
}

}  // namespace

TEST_CASE("render_scene basics", "[scenegen]") {
  SECTION("zero boxes give an image with no labels") {
    SceneSpec spec = centered_box_scene();
    spec.boxes.clear();
    LabeledImage li = render_scene(spec);
    REQUIRE(li.labels.empty());
    REQUIRE(li.image.pixels.size() == size_t(96 * 96 * 3));
  }
  SECTION("same seed gives bit-identical image and labels") {
    SceneSpec spec = centered_box_scene();
    LabeledImage a = render_scene(spec);
    LabeledImage b = render_scene(spec);
    REQUIRE(a.image.pixels == b.image.pixels);
    REQUIRE(a.labels.size() == b.labels.size());
    for (size_t i = 0; i < a.labels.size(); ++i) {
      REQUIRE(a.labels[i].x1 == b.labels[i].x1);
      REQUIRE(a.labels[i].y2 == b.labels[i].y2);
    }
  }
  SECTION("too many or duplicate boxes are refused") {
    SceneSpec spec = centered_box_scene();
    spec.boxes.push_back({1, 3.0, 5.0, 0.8});
    spec.boxes.push_back({2, 5.0, 8.0, 0.8});
    spec.boxes.push_back({0, 5.0, 2.0, 0.8});
    REQUIRE_THROWS_AS(render_scene(spec), ContractError);
    spec.boxes.resize(3);
    spec.boxes[2].class_id = 1;  // duplicate
    REQUIRE_THROWS_AS(render_scene(spec), ContractError);
  }
}

TEST_CASE("label equals the analytically projected rectangle", "[scenegen][projection]") {
  SceneSpec spec = centered_box_scene();
  LabeledImage li = render_scene(spec);
  REQUIRE(li.labels.size() == 1);
  const LabelBox& lb = li.labels[0];

  // independent pinhole arithmetic: camera at (5,5,0.6) looking along +x,
  // box corners x in {7.6, 8.4}, y in {4.6, 5.4}, z in {0, 0.8}
  const double tan_half = std::tan(30.0 * M_PI / 180.0);
  double u_min = 1e9, u_max = -1e9, v_min = 1e9, v_max = -1e9;
  for (double bx : {7.6, 8.4})
    for (double by : {4.6, 5.4})
      for (double bz : {0.0, 0.8}) {
        const double depth = bx - 5.0;         // forward = +x
        const double lateral = -(by - 5.0);    // right = -y for yaw 0
        const double height = bz - 0.6;
        const double u = 0.5 * (lateral / depth / tan_half + 1.0);
        const double v = 0.5 * (1.0 - height / depth / tan_half);
        u_min = std::min(u_min, u);
        u_max = std::max(u_max, u);
        v_min = std::min(v_min, v);
        v_max = std::max(v_max, v);
      }
  REQUIRE(lb.x1 == Catch::Approx(u_min).margin(1e-12));
  REQUIRE(lb.x2 == Catch::Approx(u_max).margin(1e-12));
  REQUIRE(lb.y1 == Catch::Approx(v_min).margin(1e-12));
  REQUIRE(lb.y2 == Catch::Approx(v_max).margin(1e-12));
}

TEST_CASE("class-colored pixels stay inside the dilated label box", "[scenegen][property]") {
  const auto palette = class_colors();
  for (uint64_t seed : {11ULL, 23ULL, 57ULL, 101ULL, 999ULL}) {
    SceneSpec spec = sample_scene(seed, 96);
    LabeledImage li = render_scene(spec);
    for (const auto& lb : li.labels) {
      const auto& col = palette[lb.class_id];
      const int64_t w = li.image.width, h = li.image.height;
      const int64_t x_lo = static_cast<int64_t>(std::floor(lb.x1 * w)) - 1;
      const int64_t x_hi = static_cast<int64_t>(std::ceil(lb.x2 * w)) + 1;
      const int64_t y_lo = static_cast<int64_t>(std::floor(lb.y1 * h)) - 1;
      const int64_t y_hi = static_cast<int64_t>(std::ceil(lb.y2 * h)) + 1;
      for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x) {
          const uint8_t* p = li.image.px(x, y);
          // conservative color-match predicates per class
          bool match = false;
          if (lb.class_id == 0)
            match = p[0] > 95 && p[0] > 1.8 * p[1] && p[0] > 1.8 * p[2];
          else if (lb.class_id == 1)
            match = p[2] > 95 && p[2] > 1.6 * p[0] && p[2] > 1.4 * p[1];
          else
            match = std::max({p[0], p[1], p[2]}) < 55;
          if (match) {
            INFO("seed " << seed << " class " << lb.class_id << " px " << x << "," << y);
            REQUIRE(x >= x_lo);
            REQUIRE(x <= x_hi);
            REQUIRE(y >= y_lo);
            REQUIRE(y <= y_hi);
          }
        }
    }
  }
}

TEST_CASE("gen_dataset split and balance", "[scenegen][dataset]") {
  SECTION("count=100 gives a 90/10 split") {
    DatasetOptions opts;
    opts.count = 100;
    opts.image_size = 32;
    opts.seed = 5;
    Dataset ds = gen_dataset(opts);
    REQUIRE(ds.train.size() == 90);
    REQUIRE(ds.val.size() == 10);
  }
  SECTION("same seed twice gives identical splits") {
    DatasetOptions opts;
    opts.count = 10;
    opts.image_size = 32;
    opts.seed = 77;
    Dataset a = gen_dataset(opts);
    Dataset b = gen_dataset(opts);
    for (size_t i = 0; i < a.train.size(); ++i)
      REQUIRE(a.train[i].image.pixels == b.train[i].image.pixels);
    REQUIRE(a.norm_mean == b.norm_mean);
  }
  SECTION("class presence is balanced within 10% of uniform over 1000 scenes") {
    std::array<int64_t, kNumClasses> counts{};
    for (int64_t i = 0; i < 1000; ++i) {
      SceneSpec spec = sample_scene(derive_seed(1234, i), 32);
      for (const auto& b : spec.boxes) counts[b.class_id]++;
    }
    const double mean = (counts[0] + counts[1] + counts[2]) / 3.0;
    for (int c = 0; c < kNumClasses; ++c) {
      INFO("class " << c << " count " << counts[c] << " mean " << mean);
      REQUIRE(std::abs(counts[c] - mean) / mean <= 0.10);
    }
  }
}

TEST_CASE("dataset round-trips through disk exactly", "[scenegen][dataset][io]") {
  namespace fs = std::filesystem;
  const std::string dir = (fs::temp_directory_path() / "edgenav_ds_test").string();
  fs::remove_all(dir);

  DatasetOptions opts;
  opts.count = 20;
  opts.image_size = 32;
  opts.seed = 9;
  Dataset ds = gen_dataset(opts);
  save_dataset(ds, dir);
  Dataset back = load_dataset(dir);
  REQUIRE(back.train.size() == ds.train.size());
  REQUIRE(back.val.size() == ds.val.size());
  REQUIRE(back.norm_mean == ds.norm_mean);
  for (size_t i = 0; i < ds.train.size(); ++i) {
    REQUIRE(back.train[i].image.pixels == ds.train[i].image.pixels);
    REQUIRE(back.train[i].labels.size() == ds.train[i].labels.size());
    for (size_t j = 0; j < ds.train[i].labels.size(); ++j) {
      REQUIRE(back.train[i].labels[j].class_id == ds.train[i].labels[j].class_id);
      REQUIRE(back.train[i].labels[j].x1 == ds.train[i].labels[j].x1);
      REQUIRE(back.train[i].labels[j].y1 == ds.train[i].labels[j].y1);
      REQUIRE(back.train[i].labels[j].x2 == ds.train[i].labels[j].x2);
      REQUIRE(back.train[i].labels[j].y2 == ds.train[i].labels[j].y2);
    }
  }

  SECTION("corrupt label line names file and line") {
    const fs::path bad = fs::path(dir) / "labels" / "000000.txt";
    std::ofstream(bad) << "0 not-a-number 0.1 0.2 0.3\n";
    try {
      load_dataset(dir);
      FAIL("expected IoError");
    } catch (const IoError& e) {
      const std::string msg = e.what();
      REQUIRE(msg.find("000000.txt:1") != std::string::npos);
    }
  }
  SECTION("empty dir loads as an empty dataset") {
    Dataset empty = load_dataset((fs::temp_directory_path() / "edgenav_nonexistent").string());
    REQUIRE(empty.train.empty());
    REQUIRE(empty.val.empty());
  }
  fs::remove_all(dir);
}
