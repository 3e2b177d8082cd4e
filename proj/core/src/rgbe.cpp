#include "sthdr/rgbe.hpp"

#include "sthdr/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>

namespace sthdr {

std::array<std::uint8_t, 4> pack_rgbe(Real r, Real g, Real b) {
    const Real v = std::max({r, g, b});
    if (v < 1e-32) return {0, 0, 0, 0};
    int e = 0;
    const Real m = std::frexp(v, &e); // v = m·2^e, m ∈ [0.5, 1)
    const Real s = m * 256.0 / v;
    auto q = [s](Real c) { return static_cast<std::uint8_t>(std::min(255.0, std::floor(c * s))); };
    return {q(r), q(g), q(b), static_cast<std::uint8_t>(e + 128)};
}

std::array<Real, 3> unpack_rgbe(const std::array<std::uint8_t, 4>& px) {
    if (px[3] == 0) return {0, 0, 0};
    const Real f = std::ldexp(1.0, static_cast<int>(px[3]) - (128 + 8));
    return {(px[0] + 0.5) * f, (px[1] + 0.5) * f, (px[2] + 0.5) * f};
}

std::vector<std::uint8_t> encode_rgbe(const Tensor& image) {
    require_chw(image, "write_hdr");
    if (image.channels() != 3) throw ShapeError("write_hdr: expected 3 channels, got " + to_string(image.shape()));
    for (std::size_t i = 0; i < image.size(); ++i)
        if (!std::isfinite(image[i]) || image[i] < 0)
            throw RangeError("write_hdr: values must be finite and non-negative");
    const int h = image.height(), w = image.width();
    std::ostringstream header;
    header << "#?RADIANCE\nFORMAT=32-bit_rle_rgbe\n\n-Y " << h << " +X " << w << "\n";
    const std::string hs = header.str();
    std::vector<std::uint8_t> out(hs.begin(), hs.end());
    out.reserve(out.size() + static_cast<std::size_t>(h) * w * 4);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const auto px = pack_rgbe(image.at(0, y, x), image.at(1, y, x), image.at(2, y, x));
            out.insert(out.end(), px.begin(), px.end());
        }
    return out;
}

namespace {

class Reader {
public:
    explicit Reader(const std::vector<std::uint8_t>& b) : bytes_(b) {}

    std::string line() {
        std::string s;
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') s.push_back(static_cast<char>(bytes_[pos_++]));
        if (pos_ >= bytes_.size()) throw FormatError("RGBE: truncated header");
        ++pos_;
        return s;
    }
    std::uint8_t byte() {
        if (pos_ >= bytes_.size()) throw FormatError("RGBE: truncated pixel data");
        return bytes_[pos_++];
    }
    std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    const std::vector<std::uint8_t>& bytes_;
    std::size_t pos_ = 0;
};

void read_scanline(Reader& in, int w, std::vector<std::array<std::uint8_t, 4>>& row) {
    if (w < 8 || w > 0x7fff) {
        for (auto& px : row) px = {in.byte(), in.byte(), in.byte(), in.byte()};
        return;
    }
    std::array<std::uint8_t, 4> first{in.byte(), in.byte(), in.byte(), in.byte()};
    if (first[0] != 2 || first[1] != 2 || (first[2] & 0x80)) {
        row[0] = first;
        for (int x = 1; x < w; ++x) row[x] = {in.byte(), in.byte(), in.byte(), in.byte()};
        return;
    }
    if (((first[2] << 8) | first[3]) != w) throw FormatError("RGBE: run-length scanline width mismatch");
    for (int c = 0; c < 4; ++c) {
        int x = 0;
        while (x < w) {
            int count = in.byte();
            if (count > 128) {
                count -= 128;
                if (count == 0 || x + count > w) throw FormatError("RGBE: bad run length");
                const std::uint8_t v = in.byte();
                for (int i = 0; i < count; ++i) row[x++][c] = v;
            } else {
                if (count == 0 || x + count > w) throw FormatError("RGBE: bad literal run");
                for (int i = 0; i < count; ++i) row[x++][c] = in.byte();
            }
        }
    }
}

} // namespace

Tensor decode_rgbe(const std::vector<std::uint8_t>& bytes) {
    Reader in(bytes);
    const std::string magic = in.line();
    if (magic.rfind("#?RADIANCE", 0) != 0 && magic.rfind("#?RGBE", 0) != 0)
        throw FormatError("RGBE: missing #?RADIANCE magic");
    for (;;) {
        const std::string l = in.line();
        if (l.empty()) break;
        if (l.rfind("FORMAT=", 0) == 0 && l != "FORMAT=32-bit_rle_rgbe")
            throw FormatError("RGBE: unsupported " + l);
    }
    const std::string res = in.line();
    int h = 0, w = 0;
    char tail = 0;
    if (std::sscanf(res.c_str(), "-Y %d +X %d%c", &h, &w, &tail) != 2 || h <= 0 || w <= 0)
        throw FormatError("RGBE: unsupported resolution line '" + res + "'");
    Tensor img = Tensor::chw(3, h, w);
    std::vector<std::array<std::uint8_t, 4>> row(static_cast<std::size_t>(w));
    for (int y = 0; y < h; ++y) {
        read_scanline(in, w, row);
        for (int x = 0; x < w; ++x) {
            const auto rgb = unpack_rgbe(row[x]);
            for (int c = 0; c < 3; ++c) img.at(c, y, x) = rgb[c];
        }
    }
    return img;
}

Tensor read_hdr(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open '" + path.string() + "'");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    try {
        return decode_rgbe(bytes);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

void write_hdr(const std::filesystem::path& path, const Tensor& image) {
    const auto bytes = encode_rgbe(image);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot write '" + path.string() + "'");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw DataError("write failed for '" + path.string() + "'");
}

} // namespace sthdr
