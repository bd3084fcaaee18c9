// Copyright 2026 The DTC Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <doctest.h>

#include <torch/torch.h>

#include "dtc/generator.hpp"
#include "grad_check.hpp"

using namespace dtc::gen;
using torch::indexing::Slice;

namespace {

GeneratorOptions tiny_options(std::int64_t image_size = 32) {
  GeneratorOptions o;
  o.image_size = image_size;
  o.base_channels = 32;
  o.min_channels = 8;
  o.z_img_dim = 8;
  o.z_region_dim = 8;
  o.embed_dim = 8;
  o.mask_size = 8;
  o.mask_hidden = 16;
  o.max_regions = 3;
  return o;
}

GenerateInput tiny_input(const GeneratorOptions& o, std::int64_t n, std::int64_t m) {
  torch::manual_seed(12);
  GenerateInput in;
  in.z_img = torch::randn({n, o.z_img_dim});
  in.z_regions = torch::randn({n, m, o.z_region_dim});
  in.layout.boxes = torch::tensor({0.1, 0.1, 0.5, 0.6}).repeat({n, m, 1});
  in.layout.valid = torch::ones({n, m}, torch::kBool);
  in.layout.embeddings = torch::randn({n, m, o.embed_dim});
  return in;
}

}  // namespace

TEST_SUITE("generator") {
  TEST_CASE("embedding matrix layout") {
    std::vector<torch::Tensor> e = {torch::randn({768}), torch::randn({768}), torch::randn({768})};
    const auto em = build_embedding_matrix(e, 128, std::nullopt, 5);
    CHECK(em.s.sizes() == torch::IntArrayRef{3, 896});
    CHECK(torch::equal(em.z, build_embedding_matrix(e, 128, std::nullopt, 5).z));
    CHECK_FALSE(torch::equal(em.z, build_embedding_matrix(e, 128, std::nullopt, 6).z));

    const auto zeros = build_embedding_matrix(e, 128, torch::zeros({3, 128}));
    for (int i = 0; i < 3; ++i) {
      CHECK(torch::equal(zeros.s[i].slice(0, 128), e[i]));
      CHECK(zeros.s[i].slice(0, 0, 128).abs().sum().item<float>() == 0.0f);
    }
    std::vector<torch::Tensor> bad = {torch::randn({8}), torch::randn({9})};
    CHECK_THROWS_AS(build_embedding_matrix(bad, 4), std::invalid_argument);
    CHECK_THROWS_AS(build_embedding_matrix(std::span<const torch::Tensor>{}, 4), std::invalid_argument);
  }

  TEST_CASE("full-canvas box covers the whole grid") {
    const auto patch = torch::sigmoid(torch::randn({1, 8, 8}));
    const auto boxes = torch::tensor({{0.0, 0.0, 1.0, 1.0}}, torch::kFloat32);
    const auto m = place_masks(patch, boxes, 16, 16);
    CHECK(m.sizes() == torch::IntArrayRef{1, 16, 16});
    CHECK((m > 0).all().item<bool>());
    CHECK((m < 1).all().item<bool>());
  }

  TEST_CASE("mask values are zero outside and interior inside the box") {
    const auto patch = torch::sigmoid(torch::randn({1, 8, 8}));
    const auto boxes = torch::tensor({{0.25, 0.125, 0.75, 0.5}}, torch::kFloat32);
    const auto m = place_masks(patch, boxes, 8, 8)[0];
    const auto inside = box_footprint(boxes, 8, 8)[0] > 0;
    CHECK((m.masked_select(~inside) == 0).all().item<bool>());
    CHECK((m.masked_select(inside) > 0).all().item<bool>());
    CHECK((m.masked_select(inside) < 1).all().item<bool>());
    CHECK(inside.sum().item<int>() == 4 * 3);
  }

  TEST_CASE("constant patch yields a constant mask inside the box") {
    const auto patch = torch::full({1, 8, 8}, 0.3, torch::kFloat64);
    const auto boxes = torch::tensor({{0.2, 0.3, 0.7, 0.9}}, torch::kFloat64);
    const auto m = place_masks(patch, boxes, 20, 20)[0];
    const auto fill = box_footprint(boxes, 20, 20)[0] * 0.3;
    CHECK((m - fill).abs().max().item<double>() < 1e-12);
  }

  TEST_CASE("masks stay inside box footprints at every resolution") {
    torch::manual_seed(4);
    MaskRegressor reg(12, 16, 8);
    for (int trial = 0; trial < 50; ++trial) {
      const auto xy = torch::rand({2, 3, 2});
      const auto wh = torch::rand({2, 3, 2}) * 0.5 + 0.05;
      const auto boxes = torch::cat({xy * 0.5, (xy * 0.5 + wh).clamp_max(1.0)}, -1);
      const auto valid = torch::tensor({{true, true, false}, {true, false, false}});
      const auto s = torch::randn({2, 3, 12});
      for (std::int64_t res : {4, 8, 16, 32, 64}) {
        const auto m = predict_masks(reg, s, boxes, valid, res, res);
        const auto foot = box_footprint(boxes, res, res) * valid.unsqueeze(-1).unsqueeze(-1);
        REQUIRE((m.masked_select(foot == 0) == 0).all().item<bool>());
        REQUIRE((m >= 0).all().item<bool>());
        REQUIRE((m <= 1).all().item<bool>());
      }
    }
  }

  TEST_CASE("zero-footprint box names the region") {
    MaskRegressor reg(4, 8, 4);
    const auto boxes = torch::tensor({{{0.0, 0.0, 1.0, 1.0}, {0.5, 0.2, 0.5, 0.6}}});
    const auto valid = torch::tensor({{true, true}});
    try {
      predict_masks(reg, torch::randn({1, 2, 4}), boxes, valid, 4, 4);
      FAIL("expected an error");
    } catch (const std::invalid_argument& e) {
      CHECK(std::string(e.what()).find("region 1") != std::string::npos);
    }
  }

  TEST_CASE("identity modulation reproduces normalized features exactly") {
    const auto x = torch::randn({2, 5, 4, 4});
    const auto gamma = torch::ones({2, 1, 5});
    const auto beta = torch::zeros({2, 1, 5});
    const auto masks = torch::ones({2, 1, 4, 4});
    const auto out = lats_modulate(x, gamma, beta, masks, torch::randn({5}), torch::randn({5}));
    CHECK(torch::equal(out, x));

    LatsNorm norm(5, 6);
    norm->eval();
    {
      torch::NoGradGuard ng;
      norm->gamma_proj->weight.zero_();
      norm->gamma_proj->bias.fill_(1.0);
      norm->beta_proj->weight.zero_();
      norm->beta_proj->bias.zero_();
    }
    const auto s = torch::randn({2, 1, 6});
    CHECK(torch::equal(norm->forward(x, s, masks), norm->norm(x)));
  }

  TEST_CASE("pixels outside every box take the background parameters") {
    const auto gamma = torch::randn({1, 2, 3});
    const auto beta = torch::randn({1, 2, 3});
    const auto boxes = torch::tensor({{{0.0, 0.0, 0.5, 0.5}, {0.25, 0.0, 0.5, 0.75}}});
    const auto masks = place_masks(torch::rand({1, 2, 4, 4}) * 0.9 + 0.05, boxes, 8, 8);
    const auto bg_g = torch::randn({3});
    const auto bg_b = torch::randn({3});
    auto [g, b] = modulation_maps(gamma, beta, masks, bg_g, bg_b);
    const auto outside = (box_footprint(boxes, 8, 8).sum(1) == 0)[0];  // [h, w]
    REQUIRE(outside.sum().item<int>() > 0);
    for (int c = 0; c < 3; ++c) {
      CHECK((g[0][c].masked_select(outside) == bg_g[c]).all().item<bool>());
      CHECK((b[0][c].masked_select(outside) == bg_b[c]).all().item<bool>());
    }
  }

  TEST_CASE("background pixels ignore the embedding matrix") {
    torch::manual_seed(8);
    LatsNorm norm(4, 6);
    MaskRegressor reg(6, 16, 4);
    norm->eval();
    const auto x = torch::randn({1, 4, 8, 8});
    const auto boxes = torch::tensor({{{0.0, 0.0, 0.5, 0.5}}});
    const auto valid = torch::tensor({{true}});
    const auto outside = (box_footprint(boxes, 8, 8)[0][0] == 0);
    torch::NoGradGuard ng;
    const auto s1 = torch::randn({1, 1, 6});
    const auto s2 = torch::randn({1, 1, 6}) * 3;
    const auto y1 = norm->forward(x, s1, predict_masks(reg, s1, boxes, valid, 8, 8));
    const auto y2 = norm->forward(x, s2, predict_masks(reg, s2, boxes, valid, 8, 8));
    for (int c = 0; c < 4; ++c) CHECK(torch::equal(y1[0][c].masked_select(outside), y2[0][c].masked_select(outside)));
    CHECK_FALSE(torch::equal(y1, y2));
  }

  TEST_CASE("half-and-half overlap averages the two regions") {
    const auto gamma = torch::tensor({{{1.0, -2.0}, {3.0, 5.0}}}, torch::kFloat64);
    const auto beta = torch::tensor({{{0.5, 0.0}, {-0.5, 2.0}}}, torch::kFloat64);
    const auto masks = torch::full({1, 2, 1, 1}, 0.5, torch::kFloat64);
    const auto bg_g = torch::tensor({7.0, 7.0}, torch::kFloat64);
    const auto bg_b = torch::tensor({-7.0, -7.0}, torch::kFloat64);
    auto [g, b] = modulation_maps(gamma, beta, masks, bg_g, bg_b);
    const double expect_g[] = {2.0, 1.5};
    const double expect_b[] = {0.0, 1.0};
    for (int c = 0; c < 2; ++c) {
      CHECK(std::abs(g[0][c][0][0].item<double>() - expect_g[c]) < 1e-5);
      CHECK(std::abs(b[0][c][0][0].item<double>() - expect_b[c]) < 1e-5);
    }
  }

  TEST_CASE("no regions without background is a misconfiguration") {
    const auto empty = torch::zeros({1, 0, 3});
    CHECK_THROWS_AS(lats_modulate(torch::randn({1, 3, 2, 2}), empty, empty, torch::zeros({1, 0, 2, 2}),
                                  torch::Tensor(), torch::Tensor()),
                    std::invalid_argument);
  }

  TEST_CASE("lats gradients match central differences") {
    torch::manual_seed(21);
    const auto opts = torch::TensorOptions().dtype(torch::kFloat64);
    const std::int64_t c = 3, d = 5, m = 2;
    const auto wg = torch::randn({d, c}, opts);
    const auto wb = torch::randn({d, c}, opts);
    const auto boxes = torch::tensor({{{0.0, 0.0, 0.75, 0.75}, {0.25, 0.5, 1.0, 1.0}}}, opts);
    const auto patches = torch::rand({1, m, 4, 4}, opts) * 0.8 + 0.1;
    const auto masks = place_masks(patches, boxes, 4, 4);
    const auto probe = torch::randn({1, c, 4, 4}, opts);
    auto f = [&](const std::vector<torch::Tensor>& in) {
      const auto& x = in[0];
      const auto& s = in[1];
      const auto out = lats_modulate(x, torch::matmul(s, wg), torch::matmul(s, wb), masks, in[2], in[3]);
      return (out * probe).sum();
    };
    const double err = dtc::testing::gradient_error(
        f, {torch::randn({1, c, 4, 4}, opts), torch::randn({1, m, d}, opts), torch::randn({c}, opts),
            torch::randn({c}, opts)});
    CHECK(err <= 1e-3);
  }

  TEST_CASE("generator output contract and determinism") {
    const auto o = tiny_options();
    torch::manual_seed(1);
    Generator g(o);
    g->eval();
    auto in = tiny_input(o, 2, 2);
    torch::NoGradGuard ng;
    const auto img = generate(g, in);
    CHECK(img.sizes() == torch::IntArrayRef{2, 3, 32, 32});
    CHECK(img.abs().max().item<float>() <= 1.0f);
    CHECK(torch::equal(img, generate(g, in)));

    const auto seeded = seeded_normal({4}, 9);
    CHECK(torch::equal(seeded, seeded_normal({4}, 9)));
  }

  TEST_CASE("block count follows the resolution") {
    CHECK(tiny_options(64).num_blocks() == 4);
    CHECK(tiny_options(128).num_blocks() == 5);
    GeneratorOptions paper;
    paper.image_size = 128;
    paper.base_channels = 32;
    paper.min_channels = 8;
    paper.z_img_dim = 8;
    paper.z_region_dim = 8;
    paper.embed_dim = 8;
    paper.mask_hidden = 16;
    torch::manual_seed(2);
    Generator g(paper);
    g->eval();
    auto in = tiny_input(paper, 1, 1);
    torch::NoGradGuard ng;
    CHECK(generate(g, in).sizes() == torch::IntArrayRef{1, 3, 128, 128});
    CHECK(GeneratorOptions{}.channels_after(0) == 128);
    CHECK(GeneratorOptions{}.channels_after(3) == 32);
    CHECK_THROWS(tiny_options(48).num_blocks());
  }

  TEST_CASE("region count limits") {
    const auto o = tiny_options();
    Generator g(o);
    g->eval();
    torch::NoGradGuard ng;
    auto none = tiny_input(o, 1, 1);
    none.layout.valid.fill_(false);
    CHECK_THROWS_AS(generate(g, none), std::invalid_argument);
    auto many = tiny_input(o, 1, 4);
    CHECK_THROWS_AS(generate(g, many), std::invalid_argument);
  }

  TEST_CASE("padded regions do not influence the image") {
    const auto o = tiny_options();
    torch::manual_seed(3);
    Generator g(o);
    g->eval();
    torch::NoGradGuard ng;
    auto in = tiny_input(o, 1, 2);
    in.layout.valid[0][1] = false;
    const auto a = generate(g, in);
    in.layout.embeddings[0][1].normal_();
    in.z_regions[0][1].normal_();
    in.layout.boxes[0][1] = torch::tensor({0.6, 0.6, 0.9, 0.9});
    CHECK(torch::equal(a, generate(g, in)));
  }
}
