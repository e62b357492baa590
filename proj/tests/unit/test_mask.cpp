#include <gtest/gtest.h>

#include <array>

#include "support.hpp"
#include "urbansolar/error.hpp"
#include "urbansolar/fidelity.hpp"
#include "urbansolar/mask.hpp"
#include "urbansolar/png_io.hpp"
#include "urbansolar/rng.hpp"

using namespace urbansolar;
using namespace urbansolar::testing;

namespace {

constexpr int kR = 96;

FisheyeMask uniform_fisheye(int r, Vec3 normal, Category c) {
    FisheyeMask m;
    m.resolution = r;
    m.frame = ViewFrame::from_normal(normal);
    m.pixels.assign(static_cast<std::size_t>(r) * r, Category::Invalid);
    for (int row = 0; row < r; ++row) {
        for (int col = 0; col < r; ++col) {
            if (FisheyeMask::in_circle(r, row, col)) m.pixels[static_cast<std::size_t>(row) * r + col] = c;
        }
    }
    return m;
}

CubeMask random_cube(std::uint64_t seed) {
    Rng rng(seed);
    CubeMask m;
    for (auto& p : m.pixels) p = static_cast<Category>(rng.below(4));
    return m;
}

}  // namespace

TEST(Fisheye, CenterPixelLooksAlongNormal) {
    const FisheyeMask m = uniform_fisheye(64, {0, -1, 0}, Category::Sky);
    const Vec3 d = m.direction(31, 31);
    const Vec3 e = m.direction(32, 32);
    EXPECT_NEAR(norm(0.5 * (d + e) - Vec3{0, -1, 0}), 0.0, 0.03);
    EXPECT_GT(m.direction(0, 32).z, 0.9);  // top row looks up
}

TEST(Fisheye, PixelForInvertsDirection) {
    const FisheyeMask m = uniform_fisheye(kR, {1, 0, 0}, Category::Sky);
    for (int row = 0; row < kR; row += 7) {
        for (int col = 0; col < kR; col += 5) {
            if (!FisheyeMask::in_circle(kR, row, col)) continue;
            const auto px = m.pixel_for(m.direction(row, col));
            ASSERT_TRUE(px.has_value());
            EXPECT_EQ(px->first, row);
            EXPECT_EQ(px->second, col);
        }
    }
    EXPECT_FALSE(m.pixel_for({-1, 0, 0}).has_value());
}

TEST(Fisheye, UnobstructedFacadeSeesHalfSky) {
    const RayCaster caster(LOD1Scene{});
    const auto m = render_fisheye(caster, {}, facade_point({0, 0, 2}, {0, -1, 0}), 256);
    EXPECT_NEAR(sky_ratio(m), 0.5, 0.01);
}

TEST(Fisheye, PointAgainstLargeWallSeesNoSky) {
    // The sensor faces a 2 km wall from 1 cm away.
    const auto scene = scene_of({box(-1000, 0.01, 1000, 2000, 1000)});
    const RayCaster caster(scene);
    const auto m = render_fisheye(caster, {}, facade_point({0, 0, 2}, {0, 1, 0}), kR);
    EXPECT_LT(sky_ratio(m), 0.01);
}

TEST(Fisheye, MatchesBruteForceAtDoubleResolution) {
    const auto scene = scene_of({box(-6, 8, 6, 14, 9)});
    const RayCaster caster(scene);
    const GlazingSpec g{0.45};
    const auto point = facade_point({0, 0, 1.5}, {0, 1, 0});
    const auto mask = render_fisheye(caster, g, point, kR);

    const int hi = 2 * kR;
    const FisheyeMask probe = uniform_fisheye(hi, point.normal, Category::Sky);
    std::size_t agree = 0, total = 0;
    for (int row = 0; row < kR; ++row) {
        for (int col = 0; col < kR; ++col) {
            if (!FisheyeMask::in_circle(kR, row, col)) continue;
            std::array<int, kCategoryCount> votes{};
            for (int dr = 0; dr < 2; ++dr) {
                for (int dc = 0; dc < 2; ++dc) {
                    const int r2 = 2 * row + dr, c2 = 2 * col + dc;
                    if (!FisheyeMask::in_circle(hi, r2, c2)) continue;
                    const Hit h = caster.cast_brute(point.position, normalized(probe.direction(r2, c2)));
                    ++votes[static_cast<std::size_t>(caster.categorize(h, g))];
                }
            }
            const auto best = static_cast<Category>(std::max_element(votes.begin(), votes.end()) - votes.begin());
            agree += mask.at(row, col) == best ? 1 : 0;
            ++total;
        }
    }
    EXPECT_GE(static_cast<double>(agree) / total, 0.98);
}

TEST(Fisheye, RejectsTinyResolution) {
    const RayCaster caster(LOD1Scene{});
    EXPECT_THROW(render_fisheye(caster, {}, facade_point({0, 0, 2}, {0, -1, 0}), 16), InputError);
}

TEST(Fisheye, RenderIsDeterministic) {
    const auto scene = generate_synthetic_city({}, 2);
    const RayCaster caster(scene);
    const auto p = sample_facade_points(scene, 4.0, 0.01).at(5);
    const auto a = render_fisheye(caster, {0.2}, p, 64);
    const auto b = render_fisheye(caster, {0.2}, p, 64);
    EXPECT_EQ(a.pixels, b.pixels);
}

TEST(Fisheye, LevelsShareGeometryAndGrowGlazing) {
    const auto scene = generate_synthetic_city({}, 4);
    const RayCaster caster(scene);
    const std::vector<GlazingSpec> specs{{0.0}, {0.2}, {0.45}};
    const auto points = sample_facade_points(scene, 6.0, 0.01);
    for (std::size_t i = 0; i < points.size(); i += 17) {
        const auto levels = render_fisheye_levels(caster, specs, points[i], 64);
        std::vector<std::size_t> glazing;
        for (std::size_t k = 0; k < levels.size(); ++k) {
            EXPECT_EQ(levels[k].pixels, render_fisheye(caster, specs[k], points[i], 64).pixels);
            glazing.push_back(static_cast<std::size_t>(
                std::count(levels[k].pixels.begin(), levels[k].pixels.end(), Category::Glazing)));
        }
        EXPECT_EQ(glazing[0], 0u);
        EXPECT_LE(glazing[0], glazing[1]);
        EXPECT_LE(glazing[1], glazing[2]);
    }
}

TEST(Fisheye, AddingABuildingNeverIncreasesSkyRatio) {
    auto base = generate_synthetic_city({}, 8);
    const auto points = sample_facade_points(base, 6.0, 0.01);
    auto denser = base;
    denser.buildings.push_back(box(55.5, 55.5, 64.5, 64.5, 40));  // central street crossing
    denser.validate();
    const RayCaster a(base), b(denser);
    for (std::size_t i = 0; i < points.size(); i += 11) {
        const double before = sky_ratio(render_fisheye(a, {}, points[i], 48));
        const double after = sky_ratio(render_fisheye(b, {}, points[i], 48));
        EXPECT_LE(after, before + 1e-12) << points[i].id;
    }
}

TEST(Fisheye, FacadeSkyRatioNeverExceedsHalf) {
    const auto scene = generate_synthetic_city({}, 9);
    const RayCaster caster(scene);
    const auto points = sample_facade_points(scene, 5.0, 0.01);
    const int r = 64;
    for (std::size_t i = 0; i < points.size(); i += 5) {
        EXPECT_LE(sky_ratio(render_fisheye(caster, {}, points[i], r)), 0.5 + 2.0 / r) << points[i].id;
    }
}

TEST(SkyRatio, ConstructedRasters) {
    EXPECT_DOUBLE_EQ(sky_ratio(uniform_fisheye(64, {1, 0, 0}, Category::Sky)), 1.0);
    EXPECT_DOUBLE_EQ(sky_ratio(uniform_fisheye(64, {1, 0, 0}, Category::Opaque)), 0.0);
    auto half = uniform_fisheye(64, {1, 0, 0}, Category::Sky);
    for (int row = 32; row < 64; ++row) {
        for (int col = 0; col < 64; ++col) {
            auto& p = half.pixels[static_cast<std::size_t>(row) * 64 + col];
            if (p != Category::Invalid) p = Category::Ground;
        }
    }
    EXPECT_NEAR(sky_ratio(half), 0.5, 1.0 / 64);
}

TEST(CubeMap, AllSkyStaysSky) {
    const auto cube = reproject_cubemap(uniform_fisheye(kR, {0, 1, 0}, Category::Sky));
    const auto frame = ViewFrame::from_normal({0, 1, 0});
    for (int row = 0; row < CubeMask::kSize; ++row) {
        for (int col = 0; col < CubeMask::kSize; ++col) {
            const bool mapped = cube_direction(frame, row, col).has_value();
            EXPECT_EQ(cube.at(row, col), mapped ? Category::Sky : Category::Ground);
        }
    }
}

TEST(CubeMap, FrontCenterMatchesFisheyeCenter) {
    const auto scene = scene_of({box(-2, 5, 2, 9, 20)});
    const RayCaster caster(scene);
    const auto point = facade_point({0, 0, 3}, {0, 1, 0});
    const auto mask = render_fisheye(caster, {0.45}, point, kR);
    const auto cube = reproject_cubemap(mask);
    EXPECT_EQ(cube.at(63, 63), mask.at(kR / 2, kR / 2));
    EXPECT_EQ(cube.at(64, 64), mask.at(kR / 2, kR / 2));
}

TEST(CubeMap, DirectionsAgreeWithRayCasts) {
    const auto scene = scene_of({box(-8, 6, 8, 12, 12), box(10, -4, 16, 10, 6)});
    const RayCaster caster(scene);
    const GlazingSpec g{0.45};
    const auto point = facade_point({0, 0, 2}, {0, 1, 0});
    const auto cube = reproject_cubemap(render_fisheye(caster, g, point, 256));
    std::size_t agree = 0, total = 0;
    for (int row = 0; row < CubeMask::kSize; ++row) {
        for (int col = 0; col < CubeMask::kSize; ++col) {
            const auto d = cube_direction(ViewFrame::from_normal(point.normal), row, col);
            if (!d) continue;
            agree += cube.at(row, col) == cast_ray(caster, g, point.position, normalized(*d)).category ? 1 : 0;
            ++total;
        }
    }
    EXPECT_GE(static_cast<double>(agree) / total, 0.95);
}

TEST(CubeMap, CornersAreUnmapped) {
    const auto frame = ViewFrame::from_normal({1, 0, 0});
    EXPECT_FALSE(cube_direction(frame, 0, 0).has_value());
    EXPECT_FALSE(cube_direction(frame, 127, 127).has_value());
    EXPECT_TRUE(cube_direction(frame, 64, 64).has_value());
    EXPECT_TRUE(cube_direction(frame, 0, 64).has_value());
    EXPECT_TRUE(cube_direction(frame, 64, 0).has_value());
}

TEST(Encoding, AllSkyOneHot) {
    CubeMask m;
    std::fill(m.pixels.begin(), m.pixels.end(), Category::Sky);
    const auto e = encode(m, Encoding::OneHot);
    ASSERT_EQ(e.channels, 4);
    for (int row = 0; row < 128; ++row) {
        for (int col = 0; col < 128; ++col) {
            EXPECT_EQ(e.at(0, row, col), 1.0f);
            EXPECT_EQ(e.at(1, row, col) + e.at(2, row, col) + e.at(3, row, col), 0.0f);
        }
    }
}

TEST(Encoding, OneHotChannelsSumToOne) {
    const auto e = encode(random_cube(5), Encoding::OneHot);
    for (int row = 0; row < 128; ++row) {
        for (int col = 0; col < 128; ++col) {
            float s = 0.0f;
            for (int c = 0; c < 4; ++c) s += e.at(c, row, col);
            ASSERT_EQ(s, 1.0f);
        }
    }
}

TEST(Encoding, OrdinalOneHotRoundTrip) {
    const auto m = random_cube(6);
    const auto ordinal = encode(m, Encoding::Ordinal);
    EXPECT_EQ(ordinal.channels, 1);
    const auto back = convert(convert(ordinal, Encoding::OneHot), Encoding::Ordinal);
    EXPECT_EQ(back.data, ordinal.data);
    EXPECT_EQ(decode(back), m);
}

TEST(Encoding, RejectsUnknownLevels) {
    auto e = encode(random_cube(7), Encoding::Ordinal);
    e.data[10] = 100.0f;
    EXPECT_THROW(decode(e), DataError);
    auto h = encode(random_cube(7), Encoding::OneHot);
    h.data[0] = 0.5f;
    EXPECT_THROW(decode(h), DataError);
    EXPECT_THROW(category_from_level(12), DataError);
}

TEST(Palette, OrderedAndSnapped) {
    EXPECT_EQ(palette_level(Category::Sky), 255);
    EXPECT_EQ(palette_level(Category::Glazing), 170);
    EXPECT_EQ(palette_level(Category::Opaque), 85);
    EXPECT_EQ(palette_level(Category::Ground), 0);
    EXPECT_EQ(nearest_category(160.0f), Category::Glazing);
    EXPECT_EQ(nearest_category(-3.0f), Category::Ground);
    EXPECT_EQ(nearest_category(300.0f), Category::Sky);
}

TEST(Png, CubeRoundTrip) {
    const auto dir = temp_dir("png");
    const auto m = random_cube(8);
    save_png(dir / "p0_1.png", m);
    EXPECT_EQ(load_cube_png(dir / "p0_1.png"), m);
}

TEST(Png, FisheyeRoundTrip) {
    const auto dir = temp_dir("png_fisheye");
    const auto scene = scene_of({box(-6, 8, 6, 14, 9)});
    const auto m = render_fisheye(RayCaster(scene), {0.2}, facade_point({0, 0, 1.5}, {0, 1, 0}), 64);
    save_png(dir / "f.png", m);
    const auto back = load_fisheye_png(dir / "f.png", {0, 1, 0});
    EXPECT_EQ(back.pixels, m.pixels);
}

TEST(Png, RejectsForeignLevels) {
    GrayImage img{128, 128, std::vector<std::uint8_t>(128 * 128, 0)};
    img.pixels[5] = 7;
    EXPECT_THROW(cube_from_image(decode_png(encode_png(img))), DataError);
}

TEST(Base64, RoundTrip) {
    const std::vector<std::uint8_t> bytes{0, 1, 2, 250, 251, 255, 10};
    EXPECT_EQ(base64_decode(base64_encode(bytes)), bytes);
    EXPECT_EQ(base64_encode(std::vector<std::uint8_t>{'M', 'a'}), "TWE=");
    EXPECT_THROW(base64_decode("@@@"), DataError);
}

TEST(PixelMetrics, SelfComparisonIsPerfect) {
    const auto m = random_cube(9);
    EXPECT_DOUBLE_EQ(pixel_accuracy(m, m), 1.0);
    EXPECT_DOUBLE_EQ(mean_iou(m, m), 1.0);
}
