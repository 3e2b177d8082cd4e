#include "sthdr/ops.hpp"

#include "sthdr/errors.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstring>

namespace sthdr {

namespace {

thread_local PieceTrace* g_trace = nullptr;

} // namespace

PieceTrace::PieceTrace() : prev_(g_trace) { g_trace = this; }
PieceTrace::~PieceTrace() { g_trace = prev_; }
PieceTrace* PieceTrace::active() noexcept { return g_trace; }

namespace {

using RowMat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

Node& parent(Node& n, std::size_t i) { return *n.parents[i]; }

template <class F>
Var unary(const Var& x, F&& f, std::function<void(Node&)> fn) {
    Tensor out(x.shape());
    const Real* src = x.value().ptr();
    Real* dst = out.ptr();
    for (std::size_t i = 0; i < out.size(); ++i) dst[i] = f(src[i]);
    return Var::make(std::move(out), {x}, std::move(fn));
}

// Unfolds output rows [oy0, oy1) of x into (Cin·k·k) × (rows·Wo) patch columns.
void im2col(const Tensor& x, int k, int stride, int pad, int oy0, int oy1, int wo, Real* cols) {
    const int c_in = x.channels(), h = x.height(), w = x.width();
    const std::size_t p = static_cast<std::size_t>(oy1 - oy0) * wo;
    for (int c = 0; c < c_in; ++c) {
        const Real* plane = x.ptr() + static_cast<std::size_t>(c) * h * w;
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                Real* row = cols + ((static_cast<std::size_t>(c) * k + ky) * k + kx) * p;
                for (int oy = oy0; oy < oy1; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    Real* dst = row + static_cast<std::size_t>(oy - oy0) * wo;
                    if (iy < 0 || iy >= h) {
                        std::fill(dst, dst + wo, Real(0));
                        continue;
                    }
                    const Real* src = plane + static_cast<std::size_t>(iy) * w;
                    for (int ox = 0; ox < wo; ++ox) {
                        const int ix = ox * stride - pad + kx;
                        dst[ox] = (ix >= 0 && ix < w) ? src[ix] : Real(0);
                    }
                }
            }
        }
    }
}

void col2im(const Real* cols, int k, int stride, int pad, int oy0, int oy1, int wo, Tensor& gx) {
    const int c_in = gx.channels(), h = gx.height(), w = gx.width();
    const std::size_t p = static_cast<std::size_t>(oy1 - oy0) * wo;
    for (int c = 0; c < c_in; ++c) {
        Real* plane = gx.ptr() + static_cast<std::size_t>(c) * h * w;
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                const Real* row = cols + ((static_cast<std::size_t>(c) * k + ky) * k + kx) * p;
                for (int oy = oy0; oy < oy1; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= h) continue;
                    const Real* src = row + static_cast<std::size_t>(oy - oy0) * wo;
                    Real* dst = plane + static_cast<std::size_t>(iy) * w;
                    for (int ox = 0; ox < wo; ++ox) {
                        const int ix = ox * stride - pad + kx;
                        if (ix >= 0 && ix < w) dst[ix] += src[ox];
                    }
                }
            }
        }
    }
}

// Bilinear sample with zero outside the image.
Real bilinear(const Real* img, int h, int w, Real y, Real x) {
    if (y <= -1 || y >= h || x <= -1 || x >= w) return 0;
    const int y0 = static_cast<int>(std::floor(y));
    const int x0 = static_cast<int>(std::floor(x));
    const int y1 = y0 + 1, x1 = x0 + 1;
    const Real ly = y - y0, lx = x - x0;
    const Real hy = 1 - ly, hx = 1 - lx;
    Real v = 0;
    if (y0 >= 0 && x0 >= 0) v += hy * hx * img[y0 * w + x0];
    if (y0 >= 0 && x1 < w) v += hy * lx * img[y0 * w + x1];
    if (y1 < h && x0 >= 0) v += ly * hx * img[y1 * w + x0];
    if (y1 < h && x1 < w) v += ly * lx * img[y1 * w + x1];
    return v;
}

// Scatters g into the four neighbours and returns d(sample)/dy, d(sample)/dx.
std::pair<Real, Real> bilinear_backward(const Real* img, Real* gimg, int h, int w, Real y, Real x, Real g) {
    if (y <= -1 || y >= h || x <= -1 || x >= w) return {0, 0};
    const int y0 = static_cast<int>(std::floor(y));
    const int x0 = static_cast<int>(std::floor(x));
    const int y1 = y0 + 1, x1 = x0 + 1;
    const Real ly = y - y0, lx = x - x0;
    const Real hy = 1 - ly, hx = 1 - lx;
    const bool v00 = y0 >= 0 && x0 >= 0, v01 = y0 >= 0 && x1 < w;
    const bool v10 = y1 < h && x0 >= 0, v11 = y1 < h && x1 < w;
    const Real p00 = v00 ? img[y0 * w + x0] : 0, p01 = v01 ? img[y0 * w + x1] : 0;
    const Real p10 = v10 ? img[y1 * w + x0] : 0, p11 = v11 ? img[y1 * w + x1] : 0;
    if (gimg) {
        if (v00) gimg[y0 * w + x0] += g * hy * hx;
        if (v01) gimg[y0 * w + x1] += g * hy * lx;
        if (v10) gimg[y1 * w + x0] += g * ly * hx;
        if (v11) gimg[y1 * w + x1] += g * ly * lx;
    }
    const Real dy = hx * (p10 - p00) + lx * (p11 - p01);
    const Real dx = hy * (p01 - p00) + ly * (p11 - p10);
    return {dy, dx};
}

// Output rows per band so that one band of patch columns stays near 2^21 values.
int band_rows(int kk, int wo, int ho) {
    const std::size_t per_row = static_cast<std::size_t>(kk) * static_cast<std::size_t>(wo);
    const std::size_t rows = std::max<std::size_t>(1, (std::size_t{1} << 21) / std::max<std::size_t>(1, per_row));
    return static_cast<int>(std::min<std::size_t>(rows, static_cast<std::size_t>(ho)));
}

struct AxisTaps {
    std::vector<int> i0, i1;
    std::vector<Real> l1;
};

AxisTaps resize_taps(int in, int out) {
    AxisTaps t;
    t.i0.resize(out);
    t.i1.resize(out);
    t.l1.resize(out);
    const Real s = static_cast<Real>(in) / out;
    for (int d = 0; d < out; ++d) {
        Real src = (d + Real(0.5)) * s - Real(0.5);
        if (src < 0) src = 0;
        int lo = static_cast<int>(std::floor(src));
        if (lo > in - 1) lo = in - 1;
        t.i0[d] = lo;
        t.i1[d] = std::min(lo + 1, in - 1);
        t.l1[d] = src - lo;
    }
    return t;
}

} // namespace

Var add(const Var& a, const Var& b) {
    require_same_shape(a.value(), b.value(), "add");
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
    return Var::make(std::move(out), {a, b}, [](Node& n) {
        for (std::size_t i = 0; i < 2; ++i)
            if (parent(n, i).requires_grad) parent(n, i).accumulate(n.grad);
    });
}

Var sub(const Var& a, const Var& b) {
    require_same_shape(a.value(), b.value(), "sub");
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
    return Var::make(std::move(out), {a, b}, [](Node& n) {
        if (parent(n, 0).requires_grad) parent(n, 0).accumulate(n.grad);
        if (parent(n, 1).requires_grad) {
            Tensor& g = parent(n, 1).grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] -= n.grad[i];
        }
    });
}

Var mul(const Var& a, const Var& b) {
    require_same_shape(a.value(), b.value(), "mul");
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
    return Var::make(std::move(out), {a, b}, [](Node& n) {
        Node& pa = parent(n, 0);
        Node& pb = parent(n, 1);
        if (pa.requires_grad) {
            Tensor& g = pa.grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * pb.value[i];
        }
        if (pb.requires_grad) {
            Tensor& g = pb.grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * pa.value[i];
        }
    });
}

Var scale(const Var& a, Real s) {
    return unary(a, [s](Real v) { return v * s; }, [s](Node& n) {
        Tensor& g = parent(n, 0).grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * n.grad[i];
    });
}

Var mul_channel(const Var& x, const Var& w) {
    require_chw(x.value(), "mul_channel");
    const int c = x.value().channels();
    if (w.value().size() != static_cast<std::size_t>(c))
        throw ShapeError("mul_channel: weight " + to_string(w.shape()) + " for input " + to_string(x.shape()));
    const std::size_t plane = x.value().plane();
    Tensor out = x.value();
    for (int ch = 0; ch < c; ++ch) {
        const Real s = w.value()[ch];
        Real* p = out.ptr() + ch * plane;
        for (std::size_t i = 0; i < plane; ++i) p[i] *= s;
    }
    return Var::make(std::move(out), {x, w}, [c, plane](Node& n) {
        Node& px = parent(n, 0);
        Node& pw = parent(n, 1);
        if (px.requires_grad) {
            Tensor& g = px.grad_buffer();
            for (int ch = 0; ch < c; ++ch) {
                const Real s = pw.value[ch];
                for (std::size_t i = 0; i < plane; ++i) g[ch * plane + i] += s * n.grad[ch * plane + i];
            }
        }
        if (pw.requires_grad) {
            Tensor& g = pw.grad_buffer();
            for (int ch = 0; ch < c; ++ch) {
                Real acc = 0;
                for (std::size_t i = 0; i < plane; ++i) acc += n.grad[ch * plane + i] * px.value[ch * plane + i];
                g[ch] += acc;
            }
        }
    });
}

Var concat(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("concat of zero tensors");
    const Tensor& first = parts.front().value();
    require_chw(first, "concat");
    int c = 0;
    for (const Var& p : parts) {
        require_chw(p.value(), "concat");
        if (p.value().height() != first.height() || p.value().width() != first.width())
            throw ShapeError("concat: spatial mismatch " + to_string(p.shape()) + " vs " + to_string(first.shape()));
        c += p.value().channels();
    }
    Tensor out = Tensor::chw(c, first.height(), first.width());
    std::size_t off = 0;
    for (const Var& p : parts) {
        std::memcpy(out.ptr() + off, p.value().ptr(), p.value().size() * sizeof(Real));
        off += p.value().size();
    }
    return Var::make(std::move(out), parts, [](Node& n) {
        std::size_t off = 0;
        for (auto& p : n.parents) {
            const std::size_t sz = p->value.size();
            if (p->requires_grad) {
                Tensor& g = p->grad_buffer();
                for (std::size_t i = 0; i < sz; ++i) g[i] += n.grad[off + i];
            }
            off += sz;
        }
    });
}

Var slice(const Var& x, int begin, int end) {
    Tensor out = slice_channels(x.value(), begin, end);
    const std::size_t off = static_cast<std::size_t>(begin) * x.value().plane();
    return Var::make(std::move(out), {x}, [off](Node& n) {
        Tensor& g = parent(n, 0).grad_buffer();
        for (std::size_t i = 0; i < n.grad.size(); ++i) g[off + i] += n.grad[i];
    });
}

Var leaky_relu(const Var& x, Real slope) {
    if (g_trace)
        for (Real v : x.value().data()) {
            g_trace->mix(v > 0);
            g_trace->note_margin(std::abs(v));
        }
    return unary(x, [slope](Real v) { return v > 0 ? v : slope * v; }, [slope](Node& n) {
        Node& p = parent(n, 0);
        Tensor& g = p.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += p.value[i] > 0 ? n.grad[i] : slope * n.grad[i];
    });
}

Var relu(const Var& x) { return leaky_relu(x, 0); }

Var sigmoid(const Var& x) {
    return unary(x, [](Real v) { return Real(1) / (Real(1) + std::exp(-v)); }, [](Node& n) {
        Tensor& g = parent(n, 0).grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * n.value[i] * (1 - n.value[i]);
    });
}

Var clamp(const Var& x, Real lo, Real hi) {
    if (g_trace)
        for (Real v : x.value().data()) {
            g_trace->mix(v < lo ? 0 : (v > hi ? 2 : 1));
            g_trace->note_margin(std::min(std::abs(v - lo), std::abs(v - hi)));
        }
    return unary(x, [lo, hi](Real v) { return std::clamp(v, lo, hi); }, [lo, hi](Node& n) {
        Node& p = parent(n, 0);
        Tensor& g = p.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i)
            if (p.value[i] >= lo && p.value[i] <= hi) g[i] += n.grad[i];
    });
}

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
    const Tensor& xv = x.value();
    const Tensor& wv = w.value();
    require_chw(xv, "conv2d input");
    if (wv.rank() != 4 || wv.dim(2) != wv.dim(3))
        throw ShapeError("conv2d: weight must be Cout×Cin×k×k, got " + to_string(wv.shape()));
    const int c_out = wv.dim(0), c_in = wv.dim(1), k = wv.dim(2);
    if (c_in != xv.channels())
        throw ShapeError("conv2d: input has " + std::to_string(xv.channels()) + " channels, weight expects " +
                         std::to_string(c_in));
    if (b && b.value().size() != static_cast<std::size_t>(c_out))
        throw ShapeError("conv2d: bias " + to_string(b.shape()) + " for " + std::to_string(c_out) + " outputs");
    const int ho = (xv.height() + 2 * pad - k) / stride + 1;
    const int wo = (xv.width() + 2 * pad - k) / stride + 1;
    if (ho < 1 || wo < 1) throw ShapeError("conv2d: empty output for input " + to_string(xv.shape()));
    const int kk = c_in * k * k;
    const std::size_t p = static_cast<std::size_t>(ho) * wo;
    const bool direct = (k == 1 && stride == 1 && pad == 0);

    const int band = band_rows(kk, wo, ho);

    Tensor out = Tensor::chw(c_out, ho, wo);
    MatMap o(out.ptr(), c_out, static_cast<Eigen::Index>(p));
    const ConstMatMap wm(wv.ptr(), c_out, kk);
    if (direct) {
        o.noalias() = wm * ConstMatMap(xv.ptr(), kk, static_cast<Eigen::Index>(p));
    } else {
        Buffer cols(static_cast<std::size_t>(kk) * band * wo);
        for (int oy0 = 0; oy0 < ho; oy0 += band) {
            const int oy1 = std::min(ho, oy0 + band);
            const auto n = static_cast<Eigen::Index>(oy1 - oy0) * wo;
            im2col(xv, k, stride, pad, oy0, oy1, wo, cols.data());
            o.middleCols(static_cast<Eigen::Index>(oy0) * wo, n).noalias() = wm * ConstMatMap(cols.data(), kk, n);
        }
    }
    if (b)
        for (int oc = 0; oc < c_out; ++oc) o.row(oc).array() += b.value()[oc];

    std::vector<Var> parents{x, w};
    if (b) parents.push_back(b);
    return Var::make(std::move(out), parents, [=](Node& n) {
        Node& px = parent(n, 0);
        Node& pw = parent(n, 1);
        const Tensor& xin = px.value;
        const ConstMatMap go(n.grad.ptr(), c_out, static_cast<Eigen::Index>(p));
        const ConstMatMap wm(pw.value.ptr(), c_out, kk);
        if (n.parents.size() > 2 && parent(n, 2).requires_grad) {
            Tensor& gb = parent(n, 2).grad_buffer();
            for (int oc = 0; oc < c_out; ++oc) gb[oc] += go.row(oc).sum();
        }
        if (direct) {
            if (pw.requires_grad) {
                MatMap gw(pw.grad_buffer().ptr(), c_out, kk);
                gw.noalias() += go * ConstMatMap(xin.ptr(), kk, static_cast<Eigen::Index>(p)).transpose();
            }
            if (px.requires_grad) {
                MatMap g(px.grad_buffer().ptr(), kk, static_cast<Eigen::Index>(p));
                g.noalias() += wm.transpose() * go;
            }
            return;
        }
        Buffer cols(static_cast<std::size_t>(kk) * band * wo);
        RowMat gcols;
        for (int oy0 = 0; oy0 < ho; oy0 += band) {
            const int oy1 = std::min(ho, oy0 + band);
            const auto nc = static_cast<Eigen::Index>(oy1 - oy0) * wo;
            const auto gband = go.middleCols(static_cast<Eigen::Index>(oy0) * wo, nc);
            if (pw.requires_grad) {
                im2col(xin, k, stride, pad, oy0, oy1, wo, cols.data());
                MatMap gw(pw.grad_buffer().ptr(), c_out, kk);
                gw.noalias() += gband * ConstMatMap(cols.data(), kk, nc).transpose();
            }
            if (px.requires_grad) {
                gcols.noalias() = wm.transpose() * gband;
                col2im(gcols.data(), k, stride, pad, oy0, oy1, wo, px.grad_buffer());
            }
        }
    });
}

Var deform_conv2d(const Var& x, const Var& offset, const Var& mask, const Var& w, const Var& b) {
    const Tensor& xv = x.value();
    const Tensor& wv = w.value();
    require_chw(xv, "deform_conv2d input");
    if (wv.rank() != 4 || wv.dim(2) != 3 || wv.dim(3) != 3)
        throw UnsupportedError("deform_conv2d: only 3×3 kernels are supported, got weight " + to_string(wv.shape()));
    const int c_out = wv.dim(0), c_in = wv.dim(1);
    const int h = xv.height(), wd = xv.width();
    if (c_in != xv.channels()) throw ShapeError("deform_conv2d: channel mismatch with weight");
    if (offset.shape() != Shape{18, h, wd}) throw ShapeError("deform_conv2d: offset must be 18×H×W, got " + to_string(offset.shape()));
    if (mask.shape() != Shape{9, h, wd}) throw ShapeError("deform_conv2d: mask must be 9×H×W, got " + to_string(mask.shape()));
    if (b && b.value().size() != static_cast<std::size_t>(c_out)) throw ShapeError("deform_conv2d: bias size mismatch");

    const int kk = c_in * 9;
    const std::size_t p = static_cast<std::size_t>(h) * wd;
    const int band = band_rows(kk, wd, h);

    // Modulated samples for output rows [y0, y1) as (Cin·9) × (rows·W) columns.
    auto sample_cols = [h, wd, p](const Tensor& xin, const Tensor& off, const Tensor& m, int y0, int y1, Real* cols) {
        const std::size_t np = static_cast<std::size_t>(y1 - y0) * wd;
        const std::size_t base = static_cast<std::size_t>(y0) * wd;
        for (int c = 0; c < xin.channels(); ++c) {
            const Real* img = xin.ptr() + c * p;
            for (int k = 0; k < 9; ++k) {
                const int ky = k / 3, kx = k % 3;
                Real* row = cols + (static_cast<std::size_t>(c) * 9 + k) * np;
                const Real* dy = off.ptr() + (2 * k) * p + base;
                const Real* dx = off.ptr() + (2 * k + 1) * p + base;
                const Real* mk = m.ptr() + k * p + base;
                for (int y = y0; y < y1; ++y) {
                    for (int xx = 0; xx < wd; ++xx) {
                        const std::size_t i = static_cast<std::size_t>(y - y0) * wd + xx;
                        const Real sy = y - 1 + ky + dy[i], sx = xx - 1 + kx + dx[i];
                        if (g_trace) {
                            const Real fy = std::floor(sy), fx = std::floor(sx);
                            g_trace->mix(static_cast<std::uint64_t>(static_cast<std::int64_t>(fy)));
                            g_trace->mix(static_cast<std::uint64_t>(static_cast<std::int64_t>(fx)));
                            g_trace->note_margin(std::min({sy - fy, fy + 1 - sy, sx - fx, fx + 1 - sx}));
                        }
                        row[i] = mk[i] * bilinear(img, h, wd, sy, sx);
                    }
                }
            }
        }
    };

    Tensor out = Tensor::chw(c_out, h, wd);
    {
        MatMap o(out.ptr(), c_out, static_cast<Eigen::Index>(p));
        const ConstMatMap wm(wv.ptr(), c_out, kk);
        Buffer cols(static_cast<std::size_t>(kk) * band * wd);
        for (int y0 = 0; y0 < h; y0 += band) {
            const int y1 = std::min(h, y0 + band);
            const auto nc = static_cast<Eigen::Index>(y1 - y0) * wd;
            sample_cols(xv, offset.value(), mask.value(), y0, y1, cols.data());
            o.middleCols(static_cast<Eigen::Index>(y0) * wd, nc).noalias() = wm * ConstMatMap(cols.data(), kk, nc);
        }
        if (b)
            for (int oc = 0; oc < c_out; ++oc) o.row(oc).array() += b.value()[oc];
    }

    std::vector<Var> parents{x, offset, mask, w};
    if (b) parents.push_back(b);
    return Var::make(std::move(out), parents, [=](Node& n) {
        Node& px = parent(n, 0);
        Node& poff = parent(n, 1);
        Node& pm = parent(n, 2);
        Node& pw = parent(n, 3);
        const ConstMatMap go(n.grad.ptr(), c_out, static_cast<Eigen::Index>(p));
        const ConstMatMap wm(pw.value.ptr(), c_out, kk);
        if (n.parents.size() > 4 && parent(n, 4).requires_grad) {
            Tensor& gb = parent(n, 4).grad_buffer();
            for (int oc = 0; oc < c_out; ++oc) gb[oc] += go.row(oc).sum();
        }
        const bool need_inputs = px.requires_grad || poff.requires_grad || pm.requires_grad;
        Real* gx = px.requires_grad ? px.grad_buffer().ptr() : nullptr;
        Real* goff = poff.requires_grad ? poff.grad_buffer().ptr() : nullptr;
        Real* gm = pm.requires_grad ? pm.grad_buffer().ptr() : nullptr;
        Buffer cols(static_cast<std::size_t>(kk) * band * wd);
        RowMat gcols;
        for (int y0 = 0; y0 < h; y0 += band) {
            const int y1 = std::min(h, y0 + band);
            const auto nc = static_cast<Eigen::Index>(y1 - y0) * wd;
            const auto gband = go.middleCols(static_cast<Eigen::Index>(y0) * wd, nc);
            if (pw.requires_grad) {
                sample_cols(px.value, poff.value, pm.value, y0, y1, cols.data());
                MatMap gw(pw.grad_buffer().ptr(), c_out, kk);
                gw.noalias() += gband * ConstMatMap(cols.data(), kk, nc).transpose();
            }
            if (!need_inputs) continue;
            gcols.noalias() = wm.transpose() * gband;
            for (int c = 0; c < c_in; ++c) {
                const Real* img = px.value.ptr() + c * p;
                Real* gimg = gx ? gx + c * p : nullptr;
                for (int k = 0; k < 9; ++k) {
                    const int ky = k / 3, kx = k % 3;
                    const Real* grow = gcols.data() + (static_cast<std::size_t>(c) * 9 + k) * nc;
                    const Real* dy = poff.value.ptr() + (2 * k) * p;
                    const Real* dx = poff.value.ptr() + (2 * k + 1) * p;
                    const Real* mk = pm.value.ptr() + k * p;
                    for (int y = y0; y < y1; ++y) {
                        for (int xx = 0; xx < wd; ++xx) {
                            const Real g = grow[static_cast<std::size_t>(y - y0) * wd + xx];
                            if (g == 0) continue;
                            const std::size_t i = static_cast<std::size_t>(y) * wd + xx;
                            const Real sy = y - 1 + ky + dy[i], sx = xx - 1 + kx + dx[i];
                            if (gm) gm[k * p + i] += g * bilinear(img, h, wd, sy, sx);
                            const auto [ddy, ddx] = bilinear_backward(img, gimg, h, wd, sy, sx, g * mk[i]);
                            if (goff) {
                                goff[(2 * k) * p + i] += g * mk[i] * ddy;
                                goff[(2 * k + 1) * p + i] += g * mk[i] * ddx;
                            }
                        }
                    }
                }
            }
        }
    });
}

Var instance_norm(const Var& x, const Var& gamma, const Var& beta, Real eps) {
    const Tensor& xv = x.value();
    require_chw(xv, "instance_norm");
    const int c = xv.channels();
    const std::size_t plane = xv.plane();
    if (gamma && gamma.value().size() != static_cast<std::size_t>(c)) throw ShapeError("instance_norm: gamma size");
    if (beta && beta.value().size() != static_cast<std::size_t>(c)) throw ShapeError("instance_norm: beta size");
    Tensor xhat(xv.shape());
    std::vector<Real> inv_std(c);
    for (int ch = 0; ch < c; ++ch) {
        const Real* src = xv.ptr() + ch * plane;
        Real mean = 0;
        for (std::size_t i = 0; i < plane; ++i) mean += src[i];
        mean /= static_cast<Real>(plane);
        Real var = 0;
        for (std::size_t i = 0; i < plane; ++i) var += (src[i] - mean) * (src[i] - mean);
        var /= static_cast<Real>(plane);
        inv_std[ch] = Real(1) / std::sqrt(var + eps);
        Real* dst = xhat.ptr() + ch * plane;
        for (std::size_t i = 0; i < plane; ++i) dst[i] = (src[i] - mean) * inv_std[ch];
    }
    Tensor out = xhat;
    for (int ch = 0; ch < c; ++ch) {
        const Real g = gamma ? gamma.value()[ch] : Real(1);
        const Real bb = beta ? beta.value()[ch] : Real(0);
        Real* dst = out.ptr() + ch * plane;
        for (std::size_t i = 0; i < plane; ++i) dst[i] = g * dst[i] + bb;
    }
    std::vector<Var> parents{x};
    const bool has_gamma = static_cast<bool>(gamma), has_beta = static_cast<bool>(beta);
    if (has_gamma) parents.push_back(gamma);
    if (has_beta) parents.push_back(beta);
    return Var::make(std::move(out), parents,
                     [xhat = std::move(xhat), inv_std = std::move(inv_std), c, plane, has_gamma, has_beta](Node& n) {
        Node& px = parent(n, 0);
        Node* pg = has_gamma ? n.parents[1].get() : nullptr;
        Node* pb = has_beta ? n.parents[has_gamma ? 2 : 1].get() : nullptr;
        const Real np = static_cast<Real>(plane);
        for (int ch = 0; ch < c; ++ch) {
            const Real* gy = n.grad.ptr() + ch * plane;
            const Real* xh = xhat.ptr() + ch * plane;
            Real sum_g = 0, sum_gx = 0;
            for (std::size_t i = 0; i < plane; ++i) {
                sum_g += gy[i];
                sum_gx += gy[i] * xh[i];
            }
            if (pg && pg->requires_grad) pg->grad_buffer()[ch] += sum_gx;
            if (pb && pb->requires_grad) pb->grad_buffer()[ch] += sum_g;
            if (px.requires_grad) {
                const Real g = pg ? pg->value[ch] : Real(1);
                Real* gx = px.grad_buffer().ptr() + ch * plane;
                const Real k = g * inv_std[ch] / np;
                for (std::size_t i = 0; i < plane; ++i) gx[i] += k * (np * gy[i] - sum_g - xh[i] * sum_gx);
            }
        }
    });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, Real eps) {
    const Tensor& xv = x.value();
    require_same_shape(xv, gamma.value(), "layer_norm gamma");
    require_same_shape(xv, beta.value(), "layer_norm beta");
    const std::size_t n_el = xv.size();
    Real mean = 0;
    for (std::size_t i = 0; i < n_el; ++i) mean += xv[i];
    mean /= static_cast<Real>(n_el);
    Real var = 0;
    for (std::size_t i = 0; i < n_el; ++i) var += (xv[i] - mean) * (xv[i] - mean);
    var /= static_cast<Real>(n_el);
    const Real inv_std = Real(1) / std::sqrt(var + eps);
    Tensor xhat(xv.shape());
    Tensor out(xv.shape());
    for (std::size_t i = 0; i < n_el; ++i) {
        xhat[i] = (xv[i] - mean) * inv_std;
        out[i] = gamma.value()[i] * xhat[i] + beta.value()[i];
    }
    return Var::make(std::move(out), {x, gamma, beta}, [xhat = std::move(xhat), inv_std, n_el](Node& n) {
        Node& px = parent(n, 0);
        Node& pg = parent(n, 1);
        Node& pb = parent(n, 2);
        if (pg.requires_grad) {
            Tensor& g = pg.grad_buffer();
            for (std::size_t i = 0; i < n_el; ++i) g[i] += n.grad[i] * xhat[i];
        }
        if (pb.requires_grad) pb.accumulate(n.grad);
        if (px.requires_grad) {
            Real sum_d = 0, sum_dx = 0;
            std::vector<Real> d(n_el);
            for (std::size_t i = 0; i < n_el; ++i) {
                d[i] = n.grad[i] * pg.value[i];
                sum_d += d[i];
                sum_dx += d[i] * xhat[i];
            }
            const Real np = static_cast<Real>(n_el);
            Tensor& gx = px.grad_buffer();
            for (std::size_t i = 0; i < n_el; ++i) gx[i] += inv_std / np * (np * d[i] - sum_d - xhat[i] * sum_dx);
        }
    });
}

Var spatial_softmax(const Var& logits) {
    const Tensor& lv = logits.value();
    if (lv.rank() != 3 || lv.channels() != 1) throw ShapeError("spatial_softmax expects 1×H×W, got " + to_string(lv.shape()));
    Real mx = lv[0];
    for (std::size_t i = 1; i < lv.size(); ++i) mx = std::max(mx, lv[i]);
    Tensor out(lv.shape());
    Real total = 0;
    for (std::size_t i = 0; i < lv.size(); ++i) {
        out[i] = std::exp(lv[i] - mx);
        total += out[i];
    }
    for (std::size_t i = 0; i < out.size(); ++i) out[i] /= total;
    return Var::make(std::move(out), {logits}, [](Node& n) {
        Real dotp = 0;
        for (std::size_t i = 0; i < n.value.size(); ++i) dotp += n.grad[i] * n.value[i];
        Tensor& g = parent(n, 0).grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.value[i] * (n.grad[i] - dotp);
    });
}

Var context_pool(const Var& x, const Var& weights) {
    const Tensor& xv = x.value();
    require_chw(xv, "context_pool");
    if (weights.shape() != Shape{1, xv.height(), xv.width()})
        throw ShapeError("context_pool: weights " + to_string(weights.shape()) + " for input " + to_string(xv.shape()));
    const int c = xv.channels();
    const auto plane = static_cast<Eigen::Index>(xv.plane());
    Tensor out = Tensor::chw(c, 1, 1);
    Eigen::Map<Eigen::Matrix<Real, Eigen::Dynamic, 1>> o(out.ptr(), c);
    o.noalias() = ConstMatMap(xv.ptr(), c, plane) * Eigen::Map<const Eigen::Matrix<Real, Eigen::Dynamic, 1>>(weights.value().ptr(), plane);
    return Var::make(std::move(out), {x, weights}, [c, plane](Node& n) {
        Node& px = parent(n, 0);
        Node& pw = parent(n, 1);
        Eigen::Map<const Eigen::Matrix<Real, Eigen::Dynamic, 1>> g(n.grad.ptr(), c);
        if (px.requires_grad) {
            MatMap gx(px.grad_buffer().ptr(), c, plane);
            gx.noalias() += g * Eigen::Map<const Eigen::Matrix<Real, 1, Eigen::Dynamic>>(pw.value.ptr(), plane);
        }
        if (pw.requires_grad) {
            Eigen::Map<Eigen::Matrix<Real, Eigen::Dynamic, 1>> gw(pw.grad_buffer().ptr(), plane);
            gw.noalias() += ConstMatMap(px.value.ptr(), c, plane).transpose() * g;
        }
    });
}

Var resize_bilinear(const Var& x, int out_h, int out_w) {
    const Tensor& xv = x.value();
    require_chw(xv, "resize_bilinear");
    if (out_h < 1 || out_w < 1) throw ShapeError("resize_bilinear: empty target size");
    const int c = xv.channels(), h = xv.height(), w = xv.width();
    AxisTaps ty = resize_taps(h, out_h), tx = resize_taps(w, out_w);
    Tensor out = Tensor::chw(c, out_h, out_w);
    for (int ch = 0; ch < c; ++ch) {
        const Real* src = xv.ptr() + static_cast<std::size_t>(ch) * h * w;
        Real* dst = out.ptr() + static_cast<std::size_t>(ch) * out_h * out_w;
        for (int oy = 0; oy < out_h; ++oy) {
            const Real ly = ty.l1[oy], hy = 1 - ly;
            const Real* r0 = src + static_cast<std::size_t>(ty.i0[oy]) * w;
            const Real* r1 = src + static_cast<std::size_t>(ty.i1[oy]) * w;
            for (int ox = 0; ox < out_w; ++ox) {
                const Real lx = tx.l1[ox], hx = 1 - lx;
                dst[oy * out_w + ox] = hy * (hx * r0[tx.i0[ox]] + lx * r0[tx.i1[ox]]) +
                                       ly * (hx * r1[tx.i0[ox]] + lx * r1[tx.i1[ox]]);
            }
        }
    }
    return Var::make(std::move(out), {x}, [ty = std::move(ty), tx = std::move(tx), c, h, w, out_h, out_w](Node& n) {
        Tensor& gx = parent(n, 0).grad_buffer();
        for (int ch = 0; ch < c; ++ch) {
            const Real* g = n.grad.ptr() + static_cast<std::size_t>(ch) * out_h * out_w;
            Real* dst = gx.ptr() + static_cast<std::size_t>(ch) * h * w;
            for (int oy = 0; oy < out_h; ++oy) {
                const Real ly = ty.l1[oy], hy = 1 - ly;
                Real* r0 = dst + static_cast<std::size_t>(ty.i0[oy]) * w;
                Real* r1 = dst + static_cast<std::size_t>(ty.i1[oy]) * w;
                for (int ox = 0; ox < out_w; ++ox) {
                    const Real lx = tx.l1[ox], hx = 1 - lx;
                    const Real v = g[oy * out_w + ox];
                    r0[tx.i0[ox]] += v * hy * hx;
                    r0[tx.i1[ox]] += v * hy * lx;
                    r1[tx.i0[ox]] += v * ly * hx;
                    r1[tx.i1[ox]] += v * ly * lx;
                }
            }
        }
    });
}

Var tonemap(const Var& x, Real mu) {
    if (!(mu > 0)) throw ConfigError("tonemap: mu must be positive");
    const Real denom = std::log1p(mu);
    return unary(x, [mu, denom](Real v) { return std::log1p(mu * v) / denom; }, [mu, denom](Node& n) {
        Node& p = parent(n, 0);
        Tensor& g = p.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * mu / ((1 + mu * p.value[i]) * denom);
    });
}

Var sum(const Var& x) {
    Real s = 0;
    for (Real v : x.value().data()) s += v;
    return Var::make(Tensor::scalar(s), {x}, [](Node& n) {
        Tensor& g = parent(n, 0).grad_buffer();
        const Real v = n.grad[0];
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += v;
    });
}

Var mean_abs_diff(const Var& a, const Var& b) {
    require_same_shape(a.value(), b.value(), "mean_abs_diff");
    const std::size_t n_el = a.value().size();
    Real s = 0;
    for (std::size_t i = 0; i < n_el; ++i) s += std::abs(a.value()[i] - b.value()[i]);
    if (g_trace)
        for (std::size_t i = 0; i < n_el; ++i) {
            const Real d = a.value()[i] - b.value()[i];
            g_trace->mix(d > 0 ? 2 : (d < 0 ? 0 : 1));
            g_trace->note_margin(std::abs(d));
        }
    return Var::make(Tensor::scalar(s / static_cast<Real>(n_el)), {a, b}, [n_el](Node& n) {
        Node& pa = parent(n, 0);
        Node& pb = parent(n, 1);
        const Real k = n.grad[0] / static_cast<Real>(n_el);
        for (std::size_t i = 0; i < n_el; ++i) {
            const Real d = pa.value[i] - pb.value[i];
            const Real sgn = d > 0 ? Real(1) : (d < 0 ? Real(-1) : Real(0));
            if (pa.requires_grad) pa.grad_buffer()[i] += k * sgn;
            if (pb.requires_grad) pb.grad_buffer()[i] -= k * sgn;
        }
    });
}

Var dot(const Var& x, const Tensor& w) {
    require_same_shape(x.value(), w, "dot");
    Real s = 0;
    for (std::size_t i = 0; i < w.size(); ++i) s += x.value()[i] * w[i];
    return Var::make(Tensor::scalar(s), {x}, [w](Node& n) {
        Tensor& g = parent(n, 0).grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[0] * w[i];
    });
}

} // namespace sthdr
