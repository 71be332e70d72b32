#include <gtest/gtest.h>

#include <cmath>

#include "restora/degradation.hpp"

using namespace restora;

TEST(BoxMask, CentredFortyBoxOnPaperResolution) {
  const auto m = make_box_mask(128, 128, 40, 40);
  EXPECT_EQ(m.count_known(), 128u * 128u - 1600u);
  EXPECT_EQ(m.at(44, 44), 0);
  EXPECT_EQ(m.at(83, 83), 0);
  EXPECT_EQ(m.at(43, 44), 1);
  EXPECT_EQ(m.at(84, 84), 1);
}

TEST(BoxMask, OddOffsetsFloor) {
  const auto m = make_box_mask(5, 6, 2, 3);
  // y0 = floor(3/2) = 1, x0 = floor(3/2) = 1
  EXPECT_EQ(m.at(1, 1), 0);
  EXPECT_EQ(m.at(2, 3), 0);
  EXPECT_EQ(m.at(0, 1), 1);
  EXPECT_EQ(m.at(1, 4), 1);
  EXPECT_EQ(m.count_known(), 30u - 6u);
}

TEST(BoxMask, EmptyAndFullBoxes) {
  EXPECT_EQ(make_box_mask(7, 9, 0, 0).count_known(), 63u);
  EXPECT_EQ(make_box_mask(7, 9, 7, 9).count_known(), 0u);
  EXPECT_THROW(make_box_mask(7, 9, 8, 2), ShapeError);
}

TEST(RandomMask, ExactCountOfUnknownPixels) {
  SeededRng rng(1);
  EXPECT_EQ(make_random_mask(10, 10, 0.70, rng).count_known(), 30u);
  EXPECT_EQ(make_random_mask(10, 10, 0.29, rng).count_known(), 71u);
  EXPECT_EQ(make_random_mask(10, 10, 0.001, rng).count_known(), 100u);
  EXPECT_THROW(make_random_mask(10, 10, 1.0, rng), ConfigError);
  EXPECT_THROW(make_random_mask(10, 10, 0.0, rng), ConfigError);
}

TEST(RandomMask, DeterministicPerSeed) {
  SeededRng a(5), b(5), c(6);
  const auto ma = make_random_mask(16, 16, 0.7, a);
  EXPECT_EQ(ma, make_random_mask(16, 16, 0.7, b));
  EXPECT_NE(ma, make_random_mask(16, 16, 0.7, c));
}

TEST(SrMask, LatticePoints) {
  const auto m = make_sr_mask(4, 4, 2);
  EXPECT_EQ(m.count_known(), 4u);
  EXPECT_EQ(m.at(0, 0), 1);
  EXPECT_EQ(m.at(0, 2), 1);
  EXPECT_EQ(m.at(2, 0), 1);
  EXPECT_EQ(m.at(2, 2), 1);
  EXPECT_EQ(make_sr_mask(5, 3, 1).count_known(), 15u);
  EXPECT_EQ(make_sr_mask(128, 128, 2).count_known(), 4096u);
  EXPECT_THROW(make_sr_mask(6, 5, 2), ShapeError);
}

TEST(SrMask, OneKnownPixelPerBlock) {
  const std::size_t f = 4;
  const auto m = make_sr_mask(16, 12, f);
  for (std::size_t by = 0; by < 16; by += f)
    for (std::size_t bx = 0; bx < 12; bx += f) {
      int known = 0;
      for (std::size_t y = by; y < by + f; ++y)
        for (std::size_t x = bx; x < bx + f; ++x) known += m.at(y, x);
      EXPECT_EQ(known, 1);
    }
}

TEST(Degrade, NoiselessBoxCopiesKnownAndZeroFillsUnknown) {
  SeededRng rng(2);
  const auto x = randn(rng, {3, 8, 8});
  const auto obs = degrade(x, DegradationTask{BoxInpaint{4, 4}, 0.0}, rng);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < 8; ++y)
      for (std::size_t xx = 0; xx < 8; ++xx) {
        const float expected = obs.m.at(y, xx) ? x.at(c, y, xx) : 0.0f;
        EXPECT_EQ(obs.z.at(c, y, xx), expected);
      }
}

TEST(Degrade, MaskConsistentForEveryMaskTask) {
  SeededRng rng(3);
  const auto x = randn(rng, {1, 8, 8});
  for (const TaskKind& kind : {TaskKind{BoxInpaint{3, 5}}, TaskKind{RandomInpaint{0.7}}, TaskKind{SuperResolution{2}}}) {
    const auto obs = degrade(x, DegradationTask{kind, 0.01}, rng);
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (!obs.m[i]) {
        EXPECT_EQ(obs.z[i], 0.0f);
      }
    }
  }
}

TEST(Degrade, DenoiseNoiseVariance) {
  SeededRng rng(4);
  const ImageTensor x(Shape{1, 1000, 1000}, 0.0f);
  const auto obs = degrade(x, DegradationTask{Denoise{0.2}, 0.01}, rng);
  EXPECT_EQ(obs.m.count_known(), obs.m.size());
  double s2 = 0, s = 0;
  for (float v : obs.z.data()) {
    s += v;
    s2 += static_cast<double>(v) * v;
  }
  const double n = static_cast<double>(x.size());
  EXPECT_NEAR(s2 / n - (s / n) * (s / n), 0.04, 0.0004);
}

TEST(Degrade, MeasurementNoiseLevel) {
  SeededRng rng(5);
  const auto x = randn(rng, {1, 1000, 1000});
  const auto obs = degrade(x, DegradationTask{SuperResolution{1}, 0.01}, rng);
  double sq = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = static_cast<double>(obs.z[i]) - x[i];
    sq += r * r;
  }
  EXPECT_NEAR(sq / static_cast<double>(x.size()), 1e-4, 1e-5);
}

TEST(Degrade, DeterministicGivenSeed) {
  SeededRng r0(6);
  const auto x = randn(r0, {1, 8, 8});
  SeededRng a(7), b(7);
  const DegradationTask task{RandomInpaint{0.5}, 0.01};
  const auto oa = degrade(x, task, a);
  const auto ob = degrade(x, task, b);
  EXPECT_EQ(oa.z, ob.z);
  EXPECT_EQ(oa.m, ob.m);
}

TEST(Degrade, ValidatesTaskAgainstShape) {
  SeededRng rng(8);
  const ImageTensor x(Shape{1, 6, 6});
  EXPECT_THROW(degrade(x, DegradationTask{BoxInpaint{7, 2}, 0.01}, rng), ShapeError);
  EXPECT_THROW(degrade(x, DegradationTask{SuperResolution{4}, 0.01}, rng), ShapeError);
  EXPECT_THROW(degrade(x, DegradationTask{RandomInpaint{1.2}, 0.01}, rng), ConfigError);
  EXPECT_THROW(degrade(x, DegradationTask{Denoise{-0.1}, 0.01}, rng), ConfigError);
  EXPECT_THROW(degrade(x, DegradationTask{BoxInpaint{2, 2}, -1.0}, rng), ConfigError);
}

TEST(TaskName, Labels) {
  EXPECT_EQ(task_name(DegradationTask{BoxInpaint{1, 1}}), "box");
  EXPECT_EQ(task_name(DegradationTask{RandomInpaint{}}), "random");
  EXPECT_EQ(task_name(DegradationTask{SuperResolution{}}), "sr");
  EXPECT_EQ(task_name(DegradationTask{Denoise{}}), "denoise");
}
