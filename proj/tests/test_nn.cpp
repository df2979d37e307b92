#include <gtest/gtest.h>

#include "px3d/nn.hpp"
#include "test_util.hpp"

using namespace px3d;
using namespace px3d::nn;
using px3d::testing::gradcheck;
using px3d::testing::random_tensor;

namespace {

/// Direct-loop oracle for window gating: out[p] = u[p] * (sum_q W[i(p), i(q)] v[q] + b[i(p)])
/// where q ranges over the positions sharing p's group.
std::vector<double> gating_reference(const Tensor& x, const LinearParams& gate, std::size_t n, bool grid) {
  const std::size_t B = x.dim(0), H = x.dim(1), W = x.dim(2), C2 = x.dim(3), c = C2 / 2;
  std::vector<double> out(B * H * W * c);
  auto group_and_index = [&](std::size_t y, std::size_t xx) {
    if (!grid) return std::pair{(y / n) * (W / n) + xx / n, (y % n) * n + xx % n};
    const std::size_t fh = H / n, fw = W / n;
    return std::pair{(y % fh) * fw + xx % fw, (y / fh) * n + xx / fw};
  };
  const auto& xd = x.data();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t xx = 0; xx < W; ++xx) {
        const auto [group, i] = group_and_index(y, xx);
        for (std::size_t ch = 0; ch < c; ++ch) {
          double mix = gate.bias.data()[i];
          for (std::size_t qy = 0; qy < H; ++qy)
            for (std::size_t qx = 0; qx < W; ++qx) {
              const auto [g2, j] = group_and_index(qy, qx);
              if (g2 != group) continue;
              mix += gate.weight.data()[i * n * n + j] * xd[((b * H + qy) * W + qx) * C2 + c + ch];
            }
          out[((b * H + y) * W + xx) * c + ch] = xd[((b * H + y) * W + xx) * C2 + ch] * mix;
        }
      }
  return out;
}

}  // namespace

TEST(Gating, BlockGatingMatchesDirectLoops) {
  Rng rng(11);
  const Tensor x = random_tensor({2, 4, 6, 4}, rng);
  const LinearParams gate = LinearParams::init(4, 4, rng);
  const Tensor y = block_gating(x, gate, 2);
  EXPECT_EQ(y.shape(), (Shape{2, 4, 6, 2}));
  const auto ref = gating_reference(x, gate, 2, false);
  for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(y.data()[i], ref[i], 1e-12);
}

TEST(Gating, GridGatingMatchesDirectLoops) {
  Rng rng(12);
  const Tensor x = random_tensor({1, 4, 6, 4}, rng);
  const LinearParams gate = LinearParams::init(4, 4, rng);
  const Tensor y = grid_gating(x, gate, 2);
  const auto ref = gating_reference(x, gate, 2, true);
  for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(y.data()[i], ref[i], 1e-12);
}

TEST(Gating, IndivisibleExtentNamesTheAxis) {
  const Tensor x = Tensor::zeros({1, 4, 6, 4});
  const LinearParams gate = LinearParams::constant(16, 16, 0.0, 1.0);
  try {
    block_gating(x, gate, 4);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("width 6"), std::string::npos) << e.what();
  }
  try {
    grid_gating(Tensor::zeros({1, 6, 8, 4}), gate, 4);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("height 6"), std::string::npos) << e.what();
  }
}

TEST(GatedMlp, ZeroOutputProjectionIsIdentity) {
  Rng rng(13);
  const GatedMlpParams p = GatedMlpParams::init(8, 2, 2, rng, true);
  const Tensor x = random_tensor({2, 8, 4, 4}, rng);
  const Tensor y = multi_axis_gmlp(x, p);
  ASSERT_EQ(y.shape(), x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(y.data()[i], x.data()[i]);
}

TEST(GatedMlp, PreservesShapeAndRejectsOddChannels) {
  Rng rng(14);
  const GatedMlpParams p = GatedMlpParams::init(4, 2, 2, rng);
  EXPECT_EQ(multi_axis_gmlp(random_tensor({1, 4, 4, 8}, rng), p).shape(), (Shape{1, 4, 4, 8}));
  EXPECT_THROW(GatedMlpParams::init(5, 2, 2, rng), ShapeError);
  EXPECT_THROW(multi_axis_gmlp(random_tensor({1, 4, 4, 5}, rng), p), ShapeError);
}

TEST(ChannelAttention, NeutralWeightsHalveEveryChannel) {
  ChannelAttentionParams p{LinearParams::constant(4, 2, 0.0, 0.0), LinearParams::constant(2, 4, 0.0, 0.0), 2};
  Rng rng(15);
  const Tensor x = random_tensor({2, 4, 3, 3}, rng);
  const Tensor y = channel_attention(x, p);
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_DOUBLE_EQ(y.data()[i], 0.5 * x.data()[i]);
  EXPECT_THROW(ChannelAttentionParams::init(6, 4, rng), ShapeError);
}

TEST(ConvBlock, ShapesAndInputCheck) {
  Rng rng(16);
  ConvBlockParams p = ConvBlockParams::init(3, 5, rng);
  EXPECT_EQ(conv_block(random_tensor({2, 3, 4, 4}, rng), p, Mode::train).shape(), (Shape{2, 5, 4, 4}));
  EXPECT_THROW(conv_block(random_tensor({2, 4, 4, 4}, rng), p, Mode::train), ShapeError);
}

TEST(HybridBlock, OutputHasDepthChannels) {
  Rng rng(17);
  HybridBlockParams p = HybridBlockParams::init(6, 3, 8, 2, 2, 4, rng);
  const Tensor y = hybrid_block(random_tensor({2, 6, 4, 4}, rng), random_tensor({2, 3, 4, 4}, rng), p, Mode::train);
  EXPECT_EQ(y.shape(), (Shape{2, 8, 4, 4}));
  EXPECT_THROW(hybrid_block(random_tensor({2, 6, 4, 4}, rng), random_tensor({2, 3, 2, 2}, rng), p, Mode::train),
               ShapeError);
}

TEST(GradCheck, GatedMlpAllParameters) {
  Rng rng(18);
  GatedMlpParams p = GatedMlpParams::init(4, 2, 2, rng);
  // Move the gates away from their pass-through start so every path is exercised.
  for (auto* lin : {&p.block_gate, &p.grid_gate}) {
    for (auto& w : lin->weight.mutable_data()) w = rng.uniform(-0.5, 0.5);
  }
  const Tensor x = random_tensor({1, 4, 4, 4}, rng, -1, 1, true);
  std::vector<Tensor> inputs{x};
  visit_params(p, "gmlp", [&](const std::string&, Tensor& t) { inputs.push_back(t); });
  EXPECT_LT(gradcheck([&](const std::vector<Tensor>& v) { return multi_axis_gmlp(v[0], p); }, inputs), 1e-6);
}

TEST(GradCheck, HybridBlockAllParameters) {
  Rng rng(19);
  HybridBlockParams p = HybridBlockParams::init(4, 2, 4, 2, 2, 2, rng);
  const Tensor up = random_tensor({2, 4, 4, 4}, rng, -1, 1, true);
  const Tensor skip = random_tensor({2, 2, 4, 4}, rng, -1, 1, true);
  std::vector<Tensor> inputs{up, skip};
  visit_params(p, "hybrid", [&](const std::string&, Tensor& t) { inputs.push_back(t); });
  const double err = gradcheck(
      [&](const std::vector<Tensor>& v) {
        HybridBlockParams copy = p;
        return hybrid_block(v[0], v[1], copy, Mode::train);
      },
      inputs);
  EXPECT_LT(err, 1e-5);
}

TEST(Visitors, NamesAreStableAndDotted) {
  Rng rng(20);
  HybridBlockParams p = HybridBlockParams::init(4, 2, 4, 2, 2, 2, rng);
  std::vector<std::string> names;
  visit_params(p, "d0", [&](const std::string& n, Tensor&) { names.push_back(n); });
  ASSERT_FALSE(names.empty());
  EXPECT_EQ(names.front(), "d0.fuse1.weight");
  EXPECT_NE(std::find(names.begin(), names.end(), "d0.gmlp.block_gate.weight"), names.end());
  std::vector<std::string> buffers;
  visit_buffers(p, "d0", [&](const std::string& n, std::vector<double>&) { buffers.push_back(n); });
  EXPECT_EQ(buffers.size(), 4u);
}
