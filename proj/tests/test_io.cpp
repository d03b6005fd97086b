#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "cloudfill/io.hpp"
#include "cloudfill/rng.hpp"

using namespace cloudfill;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("cloudfill_io_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

// 8-bit-grid color so the PNG round trip is exact
float q8(double v) { return static_cast<float>(std::lround(v * 255.0) / 255.0); }

}  // namespace

TEST_CASE("png image round trip on the 8-bit grid") {
  TempDir tmp;
  Rng rng(3);
  Image img(9, 7);
  for (float& v : img.data) v = q8(rng.uniform());
  io::write_png(tmp.path / "img.png", img);
  Image back = io::read_png_image(tmp.path / "img.png");
  REQUIRE(back.width == 9);
  REQUIRE(back.height == 7);
  CHECK(back.data == img.data);
}

TEST_CASE("png mask round trip") {
  TempDir tmp;
  Rng rng(4);
  MaskImage mask(16, 5);
  for (auto& v : mask.values) v = rng.uniform() < 0.5 ? 0 : 1;
  io::write_png(tmp.path / "mask.png", mask);
  MaskImage back = io::read_png_mask(tmp.path / "mask.png");
  CHECK(back.values == mask.values);
}

TEST_CASE("png read on missing file raises io error") {
  CHECK_THROWS_AS(io::read_png_image("/nonexistent/img.png"), IoError);
}

TEST_CASE("png read on garbage raises io error") {
  TempDir tmp;
  std::ofstream(tmp.path / "bad.png") << "not a png";
  CHECK_THROWS_AS(io::read_png_image(tmp.path / "bad.png"), IoError);
}

TEST_CASE("depth file round trip preserves values and validity") {
  TempDir tmp;
  geometry::DepthMap d(6, 4);
  d.set(0, 0, 1.25f);
  d.set(5, 3, 7.5f);
  d.set(2, 1, 0.001f);
  io::write_depth(tmp.path / "d.gdpt", d);
  auto back = io::read_depth(tmp.path / "d.gdpt");
  REQUIRE(back.width == 6);
  REQUIRE(back.height == 4);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 6; ++x) {
      CHECK(back.is_valid(x, y) == d.is_valid(x, y));
      if (d.is_valid(x, y)) CHECK(back.depth(x, y) == d.depth(x, y));
    }
}

TEST_CASE("depth file with bad magic rejected") {
  TempDir tmp;
  std::ofstream(tmp.path / "bad.gdpt") << "XXXX\0\0\0\0";
  CHECK_THROWS_AS(io::read_depth(tmp.path / "bad.gdpt"), IoError);
}

TEST_CASE("depth file truncated payload rejected") {
  TempDir tmp;
  geometry::DepthMap d(4, 4);
  d.set(0, 0, 1.0f);
  io::write_depth(tmp.path / "t.gdpt", d);
  auto size = fs::file_size(tmp.path / "t.gdpt");
  fs::resize_file(tmp.path / "t.gdpt", size - 3);
  CHECK_THROWS_AS(io::read_depth(tmp.path / "t.gdpt"), IoError);
}

TEST_CASE("camera file round trip") {
  TempDir tmp;
  geometry::CameraParams cam;
  cam.fx = 32.5;
  cam.fy = 31.25;
  cam.cx = 15.5;
  cam.cy = 16.0;
  cam.width = 32;
  cam.height = 33;
  cam.rotation = {0, -1, 0, 1, 0, 0, 0, 0, 1};
  cam.translation = {0.5, -0.25, 2.0};
  io::write_camera(tmp.path / "c.cam", cam);
  auto back = io::read_camera(tmp.path / "c.cam");
  CHECK(back.fx == cam.fx);
  CHECK(back.fy == cam.fy);
  CHECK(back.cx == cam.cx);
  CHECK(back.cy == cam.cy);
  CHECK(back.width == cam.width);
  CHECK(back.height == cam.height);
  CHECK(back.rotation == cam.rotation);
  CHECK(back.translation == cam.translation);
}

TEST_CASE("camera file missing field rejected") {
  TempDir tmp;
  std::ofstream(tmp.path / "c.cam") << "fx 1.0\nfy 1.0\n";
  CHECK_THROWS(io::read_camera(tmp.path / "c.cam"));
}

TEST_CASE("point cloud file round trip") {
  TempDir tmp;
  geometry::PointCloud pc;
  pc.points = {{0.5, -1.0, 2.5}, {3.0, 4.0, 5.0}};
  pc.colors = {{q8(0.1), q8(0.2), q8(0.3)}, {1.0f, 0.0f, q8(0.5)}};
  pc.source_tag = {0, 0};
  io::write_cloud(tmp.path / "p.gpcd", pc);
  auto back = io::read_cloud(tmp.path / "p.gpcd");
  REQUIRE(back.size() == 2);
  for (size_t i = 0; i < 2; ++i) {
    for (int c = 0; c < 3; ++c) {
      CHECK(back.points[i][c] == doctest::Approx(pc.points[i][c]).epsilon(1e-6));
      CHECK(back.colors[i][c] == doctest::Approx(pc.colors[i][c]).epsilon(1e-6));
    }
  }
}

TEST_CASE("key-value parse, sections, comments, overrides") {
  auto kv = io::KeyValues::parse_string(
      "top = 1\n"
      "# comment\n"
      "[train]\n"
      "iterations = 250\n"
      "lr = 1e-3\n"
      "flag = true\n"
      "name = adam  # trailing comment\n"
      "[infer]\n"
      "sampler = deterministic\n");
  CHECK(kv.get_int("top", 0) == 1);
  CHECK(kv.get_int("train.iterations", 0) == 250);
  CHECK(kv.get_double("train.lr", 0) == doctest::Approx(1e-3));
  CHECK(kv.get_bool("train.flag", false));
  CHECK(kv.get("train.name") == "adam");
  CHECK(kv.get("infer.sampler") == "deterministic");
  CHECK(kv.get("missing", "fallback") == "fallback");
  CHECK_FALSE(kv.has("missing"));
}

TEST_CASE("key-value serialize/parse round trip") {
  io::KeyValues kv;
  kv.set("plain", "x");
  kv.set_int("train.iterations", 42);
  kv.set_double("train.lr", 0.5);
  kv.set("scene.name", "demo");
  auto back = io::KeyValues::parse_string(kv.serialize());
  CHECK(back.entries() == kv.entries());
}

TEST_CASE("key-value malformed line rejected") {
  CHECK_THROWS_AS(io::KeyValues::parse_string("key-without-value\n"), ConfigError);
}

TEST_CASE("key-value type errors") {
  auto kv = io::KeyValues::parse_string("a = notanumber\n");
  CHECK_THROWS_AS(kv.get_int("a", 0), ConfigError);
  CHECK_THROWS_AS(kv.get_double("a", 0), ConfigError);
  CHECK_THROWS_AS(kv.get_bool("a", false), ConfigError);
}
