#include "sthdr/errors.hpp"
#include "sthdr/rgbe.hpp"
#include "sthdr_testing/fixtures.hpp"

#include <doctest.h>

#include <cmath>
#include <fstream>
#include <string>

using namespace sthdr;
using namespace sthdr::testing;

namespace {

std::vector<std::uint8_t> header(int h, int w) {
    const std::string s = "#?RADIANCE\nFORMAT=32-bit_rle_rgbe\n\n-Y " + std::to_string(h) + " +X " + std::to_string(w) + "\n";
    return {s.begin(), s.end()};
}

// New-style run-length scanline: each component is written as one run of its
// first value followed by literal dumps of the rest.
void append_rle_scanline(std::vector<std::uint8_t>& out, const std::vector<std::array<std::uint8_t, 4>>& px) {
    const int w = static_cast<int>(px.size());
    out.insert(out.end(), {2, 2, static_cast<std::uint8_t>(w >> 8), static_cast<std::uint8_t>(w & 255)});
    for (int c = 0; c < 4; ++c) {
        int i = 0;
        int run = 1;
        while (run < w && run < 127 && px[run][c] == px[0][c]) ++run;
        if (run > 2) {
            out.push_back(static_cast<std::uint8_t>(128 + run));
            out.push_back(px[0][c]);
            i = run;
        }
        while (i < w) {
            const int n = std::min(128, w - i);
            out.push_back(static_cast<std::uint8_t>(n));
            for (int k = 0; k < n; ++k) out.push_back(px[i + k][c]);
            i += n;
        }
    }
}

} // namespace

TEST_CASE("pixel packing follows the shared-exponent layout") {
    CHECK(pack_rgbe(0, 0, 0) == std::array<std::uint8_t, 4>{0, 0, 0, 0});
    // 1.0 = 0.5 · 2^1: mantissa 128, exponent 128 + 1.
    CHECK(pack_rgbe(1, 0.5, 0.25) == std::array<std::uint8_t, 4>{128, 64, 32, 129});
    const auto back = unpack_rgbe({128, 64, 32, 129});
    CHECK(back[0] == doctest::Approx((128 + 0.5) / 128.0));
    CHECK(unpack_rgbe({0, 0, 0, 0}) == std::array<Real, 3>{0, 0, 0});
}

TEST_CASE("round trip is within 1/256 of the largest channel") {
    Rng rng(1);
    for (int i = 0; i < 20000; ++i) {
        const Real m = std::exp(rng.uniform(std::log(1e-6), 0.0));
        std::array<Real, 3> v{rng.uniform(0, m), rng.uniform(0, m), rng.uniform(0, m)};
        v[rng.below(3)] = m;
        const auto out = unpack_rgbe(pack_rgbe(v[0], v[1], v[2]));
        for (int c = 0; c < 3; ++c) CHECK(std::abs(out[c] - v[c]) <= m / 256);
    }
}

TEST_CASE("gray values round trip within 1/256 relative") {
    Rng rng(2);
    for (int i = 0; i < 20000; ++i) {
        const Real g = std::exp(rng.uniform(std::log(1e-6), 0.0));
        const auto out = unpack_rgbe(pack_rgbe(g, g, g));
        CHECK(std::abs(out[0] - g) / g <= 1.0 / 256);
    }
}

TEST_CASE("file round trip preserves shape and decoded values") {
    Rng rng(3);
    const Tensor img = random_tensor({3, 7, 9}, rng, 0, 1);
    const auto dir = scratch_dir("rgbe");
    write_hdr(dir / "x.hdr", img);
    const Tensor back = read_hdr(dir / "x.hdr");
    REQUIRE(back.shape() == img.shape());
    for (int y = 0; y < 7; ++y)
        for (int x = 0; x < 9; ++x) {
            const Real m = std::max({img.at(0, y, x), img.at(1, y, x), img.at(2, y, x)});
            for (int c = 0; c < 3; ++c) CHECK(std::abs(back.at(c, y, x) - img.at(c, y, x)) <= m / 256);
        }
    // Encoding a decoded image reproduces the bytes.
    CHECK(encode_rgbe(back) == encode_rgbe(img));
}

TEST_CASE("run-length scanlines decode") {
    const int h = 3, w = 40;
    std::vector<std::uint8_t> bytes = header(h, w);
    std::vector<std::vector<std::array<std::uint8_t, 4>>> rows(h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x)
            rows[y].push_back({static_cast<std::uint8_t>(x < 10 ? 200 : x * 3), static_cast<std::uint8_t>(y * 40 + 1),
                               static_cast<std::uint8_t>(x), 130});
        append_rle_scanline(bytes, rows[y]);
    }
    const Tensor img = decode_rgbe(bytes);
    REQUIRE(img.shape() == Shape{3, h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const auto expect = unpack_rgbe(rows[y][x]);
            for (int c = 0; c < 3; ++c) CHECK(img.at(c, y, x) == expect[c]);
        }
}

TEST_CASE("malformed input is rejected") {
    const std::vector<std::uint8_t> junk{'n', 'o', 'p', 'e', '\n'};
    CHECK_THROWS_AS(decode_rgbe(junk), FormatError);
    std::vector<std::uint8_t> truncated = header(2, 2);
    truncated.insert(truncated.end(), {1, 2, 3, 130});
    CHECK_THROWS_AS(decode_rgbe(truncated), FormatError);
    Tensor neg = Tensor::chw(3, 1, 1, 0.5);
    neg[0] = -1;
    CHECK_THROWS_AS(encode_rgbe(neg), RangeError);
}
