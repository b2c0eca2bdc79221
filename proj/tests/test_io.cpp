#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "cci/config.hpp"
#include "cci/dataset.hpp"
#include "cci/error.hpp"
#include "cci/fkt.hpp"
#include "cci/image.hpp"
#include "cci/network.hpp"
#include "cci/weights_io.hpp"

using namespace cci;
namespace fs = std::filesystem;

namespace {

class TempDir : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("cci_io_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  void write(const fs::path& p, const std::string& bytes) {
    fs::create_directories(p.parent_path());
    std::ofstream(p, std::ios::binary) << bytes;
  }

  template <class F>
  std::string error_of(F&& f) {
    try {
      f();
    } catch (const std::exception& e) {
      return e.what();
    }
    return {};
  }

  fs::path dir_;
};

using Io = TempDir;

TEST_F(Io, WhiteP6Pixel) {
  write(dir_ / "w.ppm", std::string("P6\n1 1\n255\n") + "\xff\xff\xff");
  const Tensor t = image::load(dir_ / "w.ppm");
  ASSERT_EQ(t.shape(), (Shape{1, 3, 1, 1}));
  for (float v : t.data()) EXPECT_EQ(v, 1.0f);
}

TEST_F(Io, P6CommentsAndRoundTrip) {
  write(dir_ / "c.ppm", std::string("P6 # comment\n2 1 255\n") + std::string("\x00\x80\xff\x10\x20\x30", 6));
  const Tensor t = image::load(dir_ / "c.ppm");
  EXPECT_FLOAT_EQ(t.at(0, 1, 0, 0), 128.0f / 255.0f);
  EXPECT_FLOAT_EQ(t.at(0, 2, 0, 1), 48.0f / 255.0f);
  image::save_p6(dir_ / "d.ppm", t);
  EXPECT_TRUE(bit_equal(image::load(dir_ / "d.ppm"), t));
}

TEST_F(Io, MalformedMagicNamesByteOffset) {
  write(dir_ / "bad.ppm", "P5\n1 1\n255\n\x01");
  const std::string e = error_of([&] { image::load(dir_ / "bad.ppm"); });
  EXPECT_NE(e.find("bad magic at byte offset 1"), std::string::npos) << e;
  EXPECT_THROW(image::load(dir_ / "bad.ppm"), ParseError);

  write(dir_ / "bad.fkt", "FKX1");
  EXPECT_NE(error_of([&] { fkt::load(dir_ / "bad.fkt"); }).find("byte offset 2"), std::string::npos);

  write(dir_ / "short.ppm", "P6\n4 4\n255\n\x01\x02");
  EXPECT_NE(error_of([&] { image::load(dir_ / "short.ppm"); }).find("truncated"), std::string::npos);
}

TEST_F(Io, FktImageRoundTrip) {
  Rng rng(1);
  const Tensor img = Tensor::uniform({1, 3, 5, 4}, 0.0f, 1.0f, rng);
  fkt::save(dir_ / "i.fkt", img);
  EXPECT_TRUE(bit_equal(image::load(dir_ / "i.fkt"), img));
  fkt::save(dir_ / "j.fkt", Tensor({1, 2, 5, 4}));
  EXPECT_THROW(image::load(dir_ / "j.fkt"), ParseError);
}

TEST_F(Io, FktTruncatedPayload) {
  std::ostringstream os;
  fkt::write(os, Tensor({1, 1, 2, 2}));
  write(dir_ / "t.fkt", os.str().substr(0, fkt::kHeaderBytes + 5));
  EXPECT_NE(error_of([&] { fkt::load(dir_ / "t.fkt"); }).find("truncated payload"), std::string::npos);
}

TEST(Letterbox, SquareAtNativeSizeIsIdentity) {
  const image::Letterbox g = image::letterbox_geometry(64, 64, 64);
  EXPECT_EQ(g.pad_x, 0);
  EXPECT_EQ(g.pad_y, 0);
  const BoundingBox b{1, 0.3f, 0.4f, 0.2f, 0.1f, 0.7f};
  const BoundingBox s = image::to_source(b, g);
  EXPECT_FLOAT_EQ(s.cx, b.cx);
  EXPECT_FLOAT_EQ(s.w, b.w);
  Rng rng(2);
  const Tensor img = Tensor::uniform({1, 3, 64, 64}, 0.0f, 1.0f, rng);
  EXPECT_LE(max_abs_diff(image::letterbox(img, g), img), 1e-6f);
}

TEST(Letterbox, DrawnRectangleRoundTripsWithinOnePixel) {
  Rng rng(3);
  std::uniform_int_distribution<int> extent(40, 300);
  for (int trial = 0; trial < 30; ++trial) {
    const int w = extent(rng), h = extent(rng);
    std::uniform_int_distribution<int> xs(0, w - 12), ys(0, h - 12);
    const int x0 = xs(rng), y0 = ys(rng);
    const int x1 = std::min(w, x0 + 10 + static_cast<int>(rng() % 40));
    const int y1 = std::min(h, y0 + 10 + static_cast<int>(rng() % 40));
    Tensor img({1, 3, h, w}, 0.0f);
    for (int y = y0; y < y1; ++y)
      for (int x = x0; x < x1; ++x) img.at(0, 0, y, x) = 1.0f;

    const image::Letterbox g = image::letterbox_geometry(w, h, 128);
    const Tensor canvas = image::letterbox(img, g, 0.0f);
    // Locate the rectangle in the canvas by thresholding the red channel.
    int cx0 = 128, cy0 = 128, cx1 = -1, cy1 = -1;
    for (int y = 0; y < 128; ++y)
      for (int x = 0; x < 128; ++x)
        if (canvas.at(0, 0, y, x) >= 0.5f) {
          cx0 = std::min(cx0, x);
          cy0 = std::min(cy0, y);
          cx1 = std::max(cx1, x + 1);
          cy1 = std::max(cy1, y + 1);
        }
    ASSERT_GE(cx1, 0);
    const BoundingBox found{0, (cx0 + cx1) / 256.0f, (cy0 + cy1) / 256.0f, (cx1 - cx0) / 128.0f,
                            (cy1 - cy0) / 128.0f};
    const BoundingBox src = image::to_source(found, g);
    const double px = static_cast<double>(w) / g.new_w;  // one canvas pixel in source pixels
    const double tol = std::max(1.0, px);
    EXPECT_NEAR((src.cx - src.w / 2) * w, x0, tol) << w << "x" << h;
    EXPECT_NEAR((src.cx + src.w / 2) * w, x1, tol);
    EXPECT_NEAR((src.cy - src.h / 2) * h, y0, tol * static_cast<double>(h) / g.new_h / px);
    EXPECT_NEAR((src.cy + src.h / 2) * h, y1, tol * static_cast<double>(h) / g.new_h / px);

    const BoundingBox truth{0, (x0 + x1) / 2.0f / w, (y0 + y1) / 2.0f / h, static_cast<float>(x1 - x0) / w,
                            static_cast<float>(y1 - y0) / h};
    const BoundingBox back = image::to_source(image::to_canvas(truth, g), g);
    EXPECT_NEAR(back.cx * w, truth.cx * w, 1e-3);
    EXPECT_NEAR(back.h * h, truth.h * h, 1e-3);
  }
}

TEST(Letterbox, PadsWithGrayAndCentres) {
  const image::Letterbox g = image::letterbox_geometry(200, 100, 64);
  EXPECT_EQ(g.new_w, 64);
  EXPECT_EQ(g.new_h, 32);
  EXPECT_EQ(g.pad_y, 16);
  const Tensor c = image::letterbox(Tensor::zeros({1, 3, 100, 200}), g);
  EXPECT_FLOAT_EQ(c.at(0, 1, 0, 10), 114.0f / 255.0f);
  EXPECT_FLOAT_EQ(c.at(0, 1, 30, 10), 0.0f);
}

TEST(Labels, ParseAndReject) {
  const auto boxes = data::parse_labels("0 0.5 0.5 0.2 0.2\n\n1 0.1 0.2 0.05 0.3\n", 2);
  ASSERT_EQ(boxes.size(), 2u);
  EXPECT_EQ(boxes[1].class_id, 1);
  EXPECT_FLOAT_EQ(boxes[1].h, 0.3f);
  EXPECT_THROW(data::parse_labels("2 0.5 0.5 0.2 0.2\n", 2), ParseError);
  EXPECT_THROW(data::parse_labels("0 1.5 0.5 0.2 0.2\n", 2), ParseError);
  EXPECT_THROW(data::parse_labels("0 0.5 0.5 0.2\n", 2), ParseError);
  EXPECT_THROW(data::parse_labels("0 0.5 0.5 0.2 0.2 9\n", 2), ParseError);
  EXPECT_THROW(data::parse_labels("0 0.5 0.5 0 0.2\n", 2), ParseError);
  EXPECT_THROW(data::parse_labels("0.5 0.5 0.5 0.2 0.2\n", 2), ParseError);
}

TEST(Split, DeterministicNineToOne) {
  int val = 0;
  for (int i = 0; i < 10000; ++i) {
    const std::string stem = "img_" + std::to_string(i);
    EXPECT_EQ(data::in_validation(stem), data::in_validation(stem));
    val += data::in_validation(stem) ? 1 : 0;
  }
  EXPECT_NEAR(val / 10000.0, 0.1, 0.02);
}

TEST_F(Io, DatasetIndexPairsLabels) {
  write(dir_ / "images" / "b.ppm", std::string("P6 1 1 255\n") + "abc");
  write(dir_ / "images" / "a.fkt", "");
  write(dir_ / "images" / "notes.txt", "x");
  write(dir_ / "labels" / "b.txt", "0 0.5 0.5 0.1 0.1\n");
  const data::DatasetIndex idx = data::index_dataset(dir_, {"smoke", "fire"});
  ASSERT_EQ(idx.samples.size(), 2u);
  EXPECT_EQ(idx.samples[0].stem, "a");
  EXPECT_TRUE(idx.samples[0].labels.empty());
  EXPECT_EQ(idx.samples[1].labels, dir_ / "labels" / "b.txt");
  const auto train = data::index_dataset(dir_, {}, data::Split::train);
  const auto val = data::index_dataset(dir_, {}, data::Split::val);
  EXPECT_EQ(train.samples.size() + val.samples.size(), 2u);
  EXPECT_THROW(data::index_dataset(dir_ / "missing", {}), IoError);
}

TEST(Config, ParsesAndRejectsUnknownKeys) {
  const HarnessConfig c = parse_config("# comment\nwidth_multiple = 0.125\n\nuse_cgd = false  # trailing\n");
  EXPECT_DOUBLE_EQ(c.network.width_multiple, 0.125);
  EXPECT_FALSE(c.network.use_cgd);
  EXPECT_TRUE(c.network.use_carafe);
  EXPECT_THROW(parse_config("widht_multiple = 0.5\n"), ParseError);
  EXPECT_THROW(parse_config("use_cgd = maybe\n"), ParseError);
  EXPECT_THROW(parse_config("use_cgd = true\nuse_cgd = false\n"), ParseError);
  EXPECT_THROW(parse_config("use_cgd\n"), ParseError);
  try {
    parse_config("\nbogus = 1\n", "x.cfg");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("x.cfg:2"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("bogus"), std::string::npos);
  }
}

TEST(Config, FormatRoundTrips) {
  HarnessConfig c;
  c.network.width_multiple = 0.5;
  c.network.cgd_stages = {true, false, true, false};
  c.network.use_irmb = false;
  const HarnessConfig back = parse_config(format_config(c));
  EXPECT_EQ(format_config(back), format_config(c));
  EXPECT_EQ(back.network.cgd_stages, c.network.cgd_stages);
}

TEST_F(Io, WeightsRoundTrip) {
  net::NetworkConfig cfg;
  cfg.width_multiple = 0.125;
  cfg.input_size = 64;
  net::Graph a = net::build_network(cfg, 1);
  net::Graph b = net::build_network(cfg, 2);
  weights::save(a.params(), dir_ / "w.bin");
  weights::load(b.params(), dir_ / "w.bin");
  for (const auto& [name, e] : a.params().entries())
    EXPECT_TRUE(bit_equal(*e.value, *b.params().at(name).value)) << name;
  const Tensor img = Tensor::full({1, 3, 64, 64}, 0.3f);
  const auto ya = a.forward(img, Mode::eval);
  const auto yb = b.forward(img, Mode::eval);
  EXPECT_TRUE(bit_equal(ya[0], yb[0]));
}

TEST_F(Io, WeightsErrorsNameTheParameter) {
  net::NetworkConfig small;
  small.width_multiple = 0.125;
  small.input_size = 64;
  net::NetworkConfig wide = small;
  wide.width_multiple = 0.25;
  net::Graph a = net::build_network(small, 1);
  net::Graph b = net::build_network(wide, 1);
  weights::save(a.params(), dir_ / "w.bin");
  const Tensor before = *b.params().at("backbone.stem.conv.weight").value;
  const std::string e = error_of([&] { weights::load(b.params(), dir_ / "w.bin"); });
  EXPECT_NE(e.find("has shape"), std::string::npos) << e;
  EXPECT_TRUE(bit_equal(before, *b.params().at("backbone.stem.conv.weight").value));

  net::NetworkConfig plain = small;
  plain.use_carafe = false;
  net::Graph c = net::build_network(plain, 1);
  const std::string unknown = error_of([&] { weights::load(c.params(), dir_ / "w.bin"); });
  EXPECT_NE(unknown.find("unknown parameter neck.up1"), std::string::npos) << unknown;

  weights::save(c.params(), dir_ / "plain.bin");
  const std::string missing = error_of([&] { weights::load(a.params(), dir_ / "plain.bin"); });
  EXPECT_NE(missing.find("missing parameter neck.up1"), std::string::npos) << missing;

  write(dir_ / "junk.bin", "NOTW\n");
  EXPECT_THROW(weights::load(a.params(), dir_ / "junk.bin"), ParseError);
}

}  // namespace
