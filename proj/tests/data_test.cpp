#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "sface/orl.hpp"
#include "sface/pgm.hpp"
#include "testsupport.hpp"

using sface::FormatError;
using sface::data::FaceImage;
using sface::data::PairLabel;
using sface::data::RawImage;

namespace {

std::vector<FaceImage> fake_pool(const std::vector<int>& subject_ids) {
  std::vector<FaceImage> pool;
  int shot = 0;
  for (int sid : subject_ids) {
    FaceImage img;
    img.pixels.assign(FaceImage::kSize * FaceImage::kSize, 0.0f);
    img.subject_id = sid;
    img.shot_id = ++shot;
    pool.push_back(std::move(img));
  }
  return pool;
}

}  // namespace

TEST(Pgm, WriteLoadRoundTrip) {
  RawImage img;
  img.width = 5;
  img.height = 3;
  img.pixels = {0, 1, 2, 3, 4, 250, 251, 252, 253, 254, 9, 8, 7, 6, 255};
  const auto path = testsupport::temp_dir("pgm") / "img.pgm";
  sface::data::write_pgm(img, path);
  const RawImage back = sface::data::load_pgm(path);
  EXPECT_EQ(back.width, img.width);
  EXPECT_EQ(back.height, img.height);
  EXPECT_EQ(back.pixels, img.pixels);
}

TEST(Pgm, HeaderCommentsAndWhitespace) {
  std::string buf = "P5 # binary pgm\n# a comment line\n 4\t2 # extents\n255\n";
  buf += std::string(8, 'A');
  const RawImage img = sface::data::decode_pgm(buf, "mem");
  EXPECT_EQ(img.width, 4u);
  EXPECT_EQ(img.height, 2u);
  EXPECT_EQ(img.pixels[0], 'A');
}

TEST(Pgm, RejectsBadInputs) {
  EXPECT_THROW(sface::data::decode_pgm("P6 2 2 255 xxxx", "mem"), FormatError);  // wrong magic
  EXPECT_THROW(sface::data::decode_pgm("P5 2 2 65535 xxxxxxxx", "mem"), FormatError);  // maxval
  EXPECT_THROW(sface::data::decode_pgm("P5 4 4 255 short", "mem"), FormatError);  // truncated
  EXPECT_THROW(sface::data::decode_pgm("P5 0 2 255 ", "mem"), FormatError);  // zero extent
  EXPECT_THROW(sface::data::load_pgm("/nonexistent/sface.pgm"), FormatError);
}

TEST(Preprocess, CornersAnchorExactly) {
  // 2x2 checkerboard: resize anchors the four corners to the source corners.
  RawImage img;
  img.width = 2;
  img.height = 2;
  img.pixels = {0, 255, 255, 0};
  const FaceImage face = sface::data::preprocess(img);
  constexpr std::size_t S = FaceImage::kSize;
  EXPECT_FLOAT_EQ(face.pixels[0], 0.0f);
  EXPECT_FLOAT_EQ(face.pixels[S - 1], 1.0f);
  EXPECT_FLOAT_EQ(face.pixels[(S - 1) * S], 1.0f);
  EXPECT_FLOAT_EQ(face.pixels[S * S - 1], 0.0f);
  // Center of a bilinear blend of a checkerboard is the average.
  EXPECT_NEAR(face.pixels[(S / 2) * S + S / 2], 0.5f, 0.02f);
}

TEST(Preprocess, IdentityWhenAlreadyTargetSize) {
  RawImage img;
  img.width = FaceImage::kSize;
  img.height = FaceImage::kSize;
  img.pixels.resize(FaceImage::kSize * FaceImage::kSize);
  for (std::size_t i = 0; i < img.pixels.size(); ++i)
    img.pixels[i] = static_cast<std::uint8_t>(i % 256);
  const FaceImage face = sface::data::preprocess(img, 7, 3, "somewhere");
  EXPECT_EQ(face.subject_id, 7);
  EXPECT_EQ(face.shot_id, 3);
  EXPECT_EQ(face.source_path, "somewhere");
  for (std::size_t i = 0; i < img.pixels.size(); ++i)
    ASSERT_FLOAT_EQ(face.pixels[i], img.pixels[i] / 255.0f) << "at " << i;
}

TEST(Preprocess, RangeStaysInUnitInterval) {
  const FaceImage face = sface::data::preprocess(testsupport::synth_face(3, 5));
  for (float v : face.pixels) {
    ASSERT_GE(v, 0.0f);
    ASSERT_LE(v, 1.0f);
  }
}

TEST(Preprocess, TinyImageThrows) {
  RawImage img;
  img.width = 1;
  img.height = 5;
  img.pixels.assign(5, 0);
  EXPECT_THROW(sface::data::preprocess(img), std::invalid_argument);
}

TEST(Corpus, LoadsLayoutAndIds) {
  const auto root = testsupport::temp_dir("corpus_small");
  testsupport::write_corpus(root, 3, 10);
  const auto images = sface::data::load_corpus(root);
  ASSERT_EQ(images.size(), 30u);
  EXPECT_EQ(images[0].subject_id, 1);
  EXPECT_EQ(images[0].shot_id, 1);
  EXPECT_EQ(images[29].subject_id, 3);
  EXPECT_EQ(images[29].shot_id, 10);
  EXPECT_NE(images[0].source_path.find("s1"), std::string::npos);
}

TEST(Corpus, MissingRootThrows) {
  EXPECT_THROW(sface::data::load_corpus("/nonexistent/sface_corpus"), std::invalid_argument);
}

class SplitTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = new std::filesystem::path(testsupport::temp_dir("corpus_full"));
    testsupport::write_corpus(*root_);
    images_ = new std::vector<FaceImage>(sface::data::load_corpus(*root_));
  }
  static void TearDownTestSuite() {
    std::filesystem::remove_all(*root_);
    delete root_;
    delete images_;
  }
  static std::filesystem::path* root_;
  static std::vector<FaceImage>* images_;
};

std::filesystem::path* SplitTest::root_ = nullptr;
std::vector<FaceImage>* SplitTest::images_ = nullptr;

TEST_F(SplitTest, NinetyTenByImage) {
  ASSERT_EQ(images_->size(), 400u);
  const auto split = sface::data::split_corpus(*images_, 1234);
  EXPECT_EQ(split.train.size(), 360u);
  EXPECT_EQ(split.test.size(), 40u);
  EXPECT_EQ(split.seed, 1234u);
  std::set<std::string> seen;
  for (const auto& img : split.train) seen.insert(img.source_path);
  for (const auto& img : split.test) seen.insert(img.source_path);
  EXPECT_EQ(seen.size(), 400u);  // disjoint and exhaustive
}

TEST_F(SplitTest, SeedDeterminesMembership) {
  const auto a = sface::data::split_corpus(*images_, 7);
  const auto b = sface::data::split_corpus(*images_, 7);
  const auto c = sface::data::split_corpus(*images_, 8);
  for (std::size_t i = 0; i < a.train.size(); ++i)
    ASSERT_EQ(a.train[i].source_path, b.train[i].source_path);
  bool differs = false;
  for (std::size_t i = 0; i < a.train.size() && !differs; ++i)
    differs = a.train[i].source_path != c.train[i].source_path;
  EXPECT_TRUE(differs);
}

TEST_F(SplitTest, WrongCorpusSizeThrows) {
  std::vector<FaceImage> partial(images_->begin(), images_->begin() + 30);
  try {
    sface::data::split_corpus(partial, 1);
    FAIL() << "expected invalid_argument";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("30"), std::string::npos);
  }
}

TEST_F(SplitTest, ManifestRecordsSeedAndMembership) {
  const auto split = sface::data::split_corpus(*images_, 99);
  const auto path = testsupport::temp_dir("manifest") / "split.txt";
  sface::data::write_manifest(split, path);
  std::ifstream f(path);
  std::string line;
  ASSERT_TRUE(std::getline(f, line));
  EXPECT_EQ(line, "seed 99");
  std::size_t train_lines = 0, test_lines = 0;
  while (std::getline(f, line)) {
    if (line.ends_with(" train")) ++train_lines;
    else if (line.ends_with(" test")) ++test_lines;
    else FAIL() << "unexpected manifest line: " << line;
  }
  EXPECT_EQ(train_lines, 360u);
  EXPECT_EQ(test_lines, 40u);
}

TEST(SamplePairs, LabelsMatchSubjects) {
  const auto pool = fake_pool({1, 1, 1, 2, 2, 3, 3, 3, 4, 5});
  const auto pairs = sface::data::sample_pairs(pool, 200, 0.5, 42);
  ASSERT_EQ(pairs.size(), 200u);
  std::size_t genuine = 0;
  for (const auto& p : pairs) {
    if (p.label == PairLabel::Genuine) {
      EXPECT_EQ(p.a.subject_id, p.b.subject_id);
      EXPECT_FALSE(p.a.subject_id == p.b.subject_id && p.a.shot_id == p.b.shot_id)
          << "genuine pair must use two distinct images";
      ++genuine;
    } else {
      EXPECT_NE(p.a.subject_id, p.b.subject_id);
    }
  }
  // Roughly half genuine at fraction 0.5.
  EXPECT_GT(genuine, 60u);
  EXPECT_LT(genuine, 140u);
}

TEST(SamplePairs, FractionExtremes) {
  const auto pool = fake_pool({1, 1, 2, 2, 3});
  for (const auto& p : sface::data::sample_pairs(pool, 50, 1.0, 1))
    EXPECT_EQ(p.label, PairLabel::Genuine);
  for (const auto& p : sface::data::sample_pairs(pool, 50, 0.0, 1))
    EXPECT_EQ(p.label, PairLabel::Impostor);
}

TEST(SamplePairs, DeterministicPerSeed) {
  const auto pool = fake_pool({1, 1, 2, 2, 3, 3});
  const auto a = sface::data::sample_pairs(pool, 64, 0.5, 5);
  const auto b = sface::data::sample_pairs(pool, 64, 0.5, 5);
  for (std::size_t i = 0; i < a.size(); ++i) {
    ASSERT_EQ(a[i].label, b[i].label);
    ASSERT_EQ(a[i].a.shot_id, b[i].a.shot_id);
    ASSERT_EQ(a[i].b.shot_id, b[i].b.shot_id);
  }
}

TEST(SamplePairs, ImpossibleRequestsThrow) {
  // All images belong to one subject: impostor pairs cannot exist.
  EXPECT_THROW(sface::data::sample_pairs(fake_pool({1, 1, 1}), 10, 0.5, 1),
               std::invalid_argument);
  // One image per subject: genuine pairs cannot exist.
  EXPECT_THROW(sface::data::sample_pairs(fake_pool({1, 2, 3}), 10, 0.5, 1),
               std::invalid_argument);
  // Each request is fine when the other kind is not asked for.
  EXPECT_NO_THROW(sface::data::sample_pairs(fake_pool({1, 1, 1}), 10, 1.0, 1));
  EXPECT_NO_THROW(sface::data::sample_pairs(fake_pool({1, 2, 3}), 10, 0.0, 1));
  EXPECT_THROW(sface::data::sample_pairs(fake_pool({1, 1}), 10, 1.5, 1),
               std::invalid_argument);
}
