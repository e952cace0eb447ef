#include "dividemix/nn.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

namespace dmx {

namespace {

constexpr double kLogFloor = 1e-12;

double clamped_log(double p) { return std::log(p < kLogFloor ? kLogFloor : p); }

void relu_inplace(Mat& m) {
    for (double& v : m.a)
        if (v < 0.0) v = 0.0;
}

std::vector<double> colsum(const Mat& m) {
    std::vector<double> s(m.cols, 0.0);
    for (int i = 0; i < m.rows; ++i) {
        const double* r = m.row(i);
        for (int j = 0; j < m.cols; ++j) s[j] += r[j];
    }
    return s;
}

void add_bias_rows(Mat& m, const std::vector<double>& b) {
    for (int i = 0; i < m.rows; ++i) {
        double* r = m.row(i);
        for (int j = 0; j < m.cols; ++j) r[j] += b[j];
    }
}

// 3×3 convolution, stride 1, pad 1. X is (batch × ic·h·w), filters (oc × ic·9).
Mat conv3x3(const Mat& X, const Mat& W, const std::vector<double>& bias, int ic, int h, int w) {
    int oc = W.rows;
    Mat Y(X.rows, oc * h * w);
    parallel_for(X.rows, [&](int lo, int hi) {
        for (int n = lo; n < hi; ++n) {
            const double* x = X.row(n);
            double* y = Y.row(n);
            for (int o = 0; o < oc; ++o) {
                const double* f = W.row(o);
                double* yo = y + o * h * w;
                for (int yy = 0; yy < h; ++yy) {
                    for (int xx = 0; xx < w; ++xx) {
                        double s = bias[o];
                        for (int c = 0; c < ic; ++c) {
                            const double* xc = x + c * h * w;
                            const double* fc = f + c * 9;
                            for (int ky = 0; ky < 3; ++ky) {
                                int sy = yy + ky - 1;
                                if (sy < 0 || sy >= h) continue;
                                for (int kx = 0; kx < 3; ++kx) {
                                    int sx = xx + kx - 1;
                                    if (sx < 0 || sx >= w) continue;
                                    s += xc[sy * w + sx] * fc[ky * 3 + kx];
                                }
                            }
                        }
                        yo[yy * w + xx] = s;
                    }
                }
            }
        }
    });
    return Y;
}

// Gradients of conv3x3: accumulates dW/db and returns dX.
Mat conv3x3_backward(const Mat& X, const Mat& W, const Mat& dY, int ic, int h, int w, Mat& dW,
                     std::vector<double>& db) {
    int oc = W.rows;
    Mat dX(X.rows, X.cols);
    for (int n = 0; n < X.rows; ++n) {
        const double* x = X.row(n);
        const double* dy = dY.row(n);
        double* dx = dX.row(n);
        for (int o = 0; o < oc; ++o) {
            const double* dyo = dy + o * h * w;
            const double* f = W.row(o);
            double* dfo = dW.row(o);
            for (int yy = 0; yy < h; ++yy) {
                for (int xx = 0; xx < w; ++xx) {
                    double g = dyo[yy * w + xx];
                    if (g == 0.0) continue;
                    db[o] += g;
                    for (int c = 0; c < ic; ++c) {
                        const double* xc = x + c * h * w;
                        double* dxc = dx + c * h * w;
                        const double* fc = f + c * 9;
                        double* dfc = dfo + c * 9;
                        for (int ky = 0; ky < 3; ++ky) {
                            int sy = yy + ky - 1;
                            if (sy < 0 || sy >= h) continue;
                            for (int kx = 0; kx < 3; ++kx) {
                                int sx = xx + kx - 1;
                                if (sx < 0 || sx >= w) continue;
                                dfc[ky * 3 + kx] += g * xc[sy * w + sx];
                                dxc[sy * w + sx] += g * fc[ky * 3 + kx];
                            }
                        }
                    }
                }
            }
        }
    }
    return dX;
}

// 2×2 average pooling over each channel plane.
Mat avgpool2(const Mat& X, int c, int h, int w) {
    int oh = h / 2, ow = w / 2;
    Mat Y(X.rows, c * oh * ow);
    for (int n = 0; n < X.rows; ++n) {
        const double* x = X.row(n);
        double* y = Y.row(n);
        for (int ch = 0; ch < c; ++ch) {
            const double* xc = x + ch * h * w;
            double* yc = y + ch * oh * ow;
            for (int yy = 0; yy < oh; ++yy)
                for (int xx = 0; xx < ow; ++xx) {
                    const double* p = xc + (2 * yy) * w + 2 * xx;
                    yc[yy * ow + xx] = 0.25 * (p[0] + p[1] + p[w] + p[w + 1]);
                }
        }
    }
    return Y;
}

Mat avgpool2_backward(const Mat& dY, int c, int h, int w) {
    int oh = h / 2, ow = w / 2;
    Mat dX(dY.rows, c * h * w);
    for (int n = 0; n < dY.rows; ++n) {
        const double* dy = dY.row(n);
        double* dx = dX.row(n);
        for (int ch = 0; ch < c; ++ch) {
            const double* dyc = dy + ch * oh * ow;
            double* dxc = dx + ch * h * w;
            for (int yy = 0; yy < oh; ++yy)
                for (int xx = 0; xx < ow; ++xx) {
                    double g = 0.25 * dyc[yy * ow + xx];
                    double* p = dxc + (2 * yy) * w + 2 * xx;
                    p[0] += g;
                    p[1] += g;
                    p[w] += g;
                    p[w + 1] += g;
                }
        }
    }
    return dX;
}

void relu_mask_inplace(Mat& grad, const Mat& post) {
    for (size_t i = 0; i < grad.a.size(); ++i)
        if (post.a[i] <= 0.0) grad.a[i] = 0.0;
}

Mat he_uniform(int rows, int cols, int fan_in, Rng& rng) {
    Mat m(rows, cols);
    double limit = std::sqrt(6.0 / fan_in);
    std::uniform_real_distribution<double> d(-limit, limit);
    for (double& v : m.a) v = d(rng);
    return m;
}

} // namespace

int ArchSpec::input_size() const {
    return kind == ArchKind::Mlp ? input_dim : in_c * in_h * in_w;
}

void ArchSpec::validate() const {
    if (classes < 2) throw InvalidConfig("arch: classes must be >= 2");
    if (kind == ArchKind::Mlp) {
        if (input_dim < 1) throw InvalidConfig("arch: input_dim must be >= 1");
        for (int h : hidden)
            if (h < 1) throw InvalidConfig("arch: hidden widths must be >= 1");
    } else {
        if (in_c < 1 || in_h < 1 || in_w < 1) throw InvalidConfig("arch: image dims must be >= 1");
        if (conv_channels.size() != 2) throw InvalidConfig("arch: cnn expects exactly 2 conv layers");
        if (in_h % 4 != 0 || in_w % 4 != 0)
            throw InvalidConfig("arch: cnn needs image height/width divisible by 4");
        if (fc_hidden < 1) throw InvalidConfig("arch: fc_hidden must be >= 1");
    }
}

Model Model::init(const ArchSpec& arch, int tag, Rng& rng) {
    arch.validate();
    Model m;
    m.arch = arch;
    m.tag = tag;
    if (arch.kind == ArchKind::Mlp) {
        std::vector<int> sizes;
        sizes.push_back(arch.input_dim);
        for (int h : arch.hidden) sizes.push_back(h);
        sizes.push_back(arch.classes);
        for (size_t l = 0; l + 1 < sizes.size(); ++l) {
            m.w.push_back(he_uniform(sizes[l + 1], sizes[l], sizes[l], rng));
            m.b.emplace_back(sizes[l + 1], 0.0);
        }
    } else {
        int c1 = arch.conv_channels[0], c2 = arch.conv_channels[1];
        m.w.push_back(he_uniform(c1, arch.in_c * 9, arch.in_c * 9, rng));
        m.b.emplace_back(c1, 0.0);
        m.w.push_back(he_uniform(c2, c1 * 9, c1 * 9, rng));
        m.b.emplace_back(c2, 0.0);
        int flat = c2 * (arch.in_h / 4) * (arch.in_w / 4);
        m.w.push_back(he_uniform(arch.fc_hidden, flat, flat, rng));
        m.b.emplace_back(arch.fc_hidden, 0.0);
        m.w.push_back(he_uniform(arch.classes, arch.fc_hidden, arch.fc_hidden, rng));
        m.b.emplace_back(arch.classes, 0.0);
    }
    return m;
}

size_t Model::param_count() const {
    size_t n = 0;
    for (const auto& mw : w) n += mw.size();
    for (const auto& mb : b) n += mb.size();
    return n;
}

bool Model::all_finite() const {
    for (const auto& mw : w)
        if (!mw.all_finite()) return false;
    for (const auto& mb : b)
        for (double v : mb)
            if (!std::isfinite(v)) return false;
    return true;
}

Grads Grads::zeros_like(const Model& m) {
    Grads g;
    for (const auto& mw : m.w) g.w.emplace_back(mw.rows, mw.cols);
    for (const auto& mb : m.b) g.b.emplace_back(mb.size(), 0.0);
    return g;
}

void Grads::scale(double s) {
    for (auto& mw : w)
        for (double& v : mw.a) v *= s;
    for (auto& mb : b)
        for (double& v : mb) v *= s;
}

Mat softmax_rows(const Mat& logits) {
    Mat p(logits.rows, logits.cols);
    for (int i = 0; i < logits.rows; ++i) {
        const double* z = logits.row(i);
        double* o = p.row(i);
        double mx = z[0];
        for (int j = 1; j < logits.cols; ++j) mx = std::max(mx, z[j]);
        double sum = 0.0;
        for (int j = 0; j < logits.cols; ++j) {
            o[j] = std::exp(z[j] - mx);
            sum += o[j];
        }
        for (int j = 0; j < logits.cols; ++j) o[j] /= sum;
    }
    return p;
}

ForwardCache forward_cached(const Model& m, const Mat& inputs) {
    if (inputs.cols != m.arch.input_size())
        throw InvalidInput("forward: input dimension " + std::to_string(inputs.cols) +
                           " does not match architecture " + std::to_string(m.arch.input_size()));
    ForwardCache c;
    c.stage.push_back(inputs);
    if (m.arch.kind == ArchKind::Mlp) {
        size_t L = m.w.size();
        for (size_t l = 0; l + 1 < L; ++l) {
            Mat z = matmul_nt(c.stage.back(), m.w[l]);
            add_bias_rows(z, m.b[l]);
            relu_inplace(z);
            c.stage.push_back(std::move(z));
        }
        c.logits = matmul_nt(c.stage.back(), m.w[L - 1]);
        add_bias_rows(c.logits, m.b[L - 1]);
    } else {
        const auto& a = m.arch;
        int c1 = a.conv_channels[0], c2 = a.conv_channels[1];
        int h = a.in_h, w = a.in_w;
        Mat r1 = conv3x3(inputs, m.w[0], m.b[0], a.in_c, h, w);
        relu_inplace(r1);
        Mat p1 = avgpool2(r1, c1, h, w);
        Mat r2 = conv3x3(p1, m.w[1], m.b[1], c1, h / 2, w / 2);
        relu_inplace(r2);
        Mat p2 = avgpool2(r2, c2, h / 2, w / 2); // (batch × c2·h/4·w/4)
        Mat fc = matmul_nt(p2, m.w[2]);
        add_bias_rows(fc, m.b[2]);
        relu_inplace(fc);
        c.logits = matmul_nt(fc, m.w[3]);
        add_bias_rows(c.logits, m.b[3]);
        c.stage.push_back(std::move(r1));
        c.stage.push_back(std::move(p1));
        c.stage.push_back(std::move(r2));
        c.stage.push_back(std::move(p2));
        c.stage.push_back(std::move(fc));
    }
    c.probs = softmax_rows(c.logits);
    return c;
}

Mat forward_probs(const Model& m, const Mat& inputs) {
    return forward_cached(m, inputs).probs;
}

Grads backward_logits(const Model& m, const ForwardCache& cache, const Mat& dlogits) {
    Grads g = Grads::zeros_like(m);
    if (m.arch.kind == ArchKind::Mlp) {
        size_t L = m.w.size();
        Mat dz = dlogits;
        for (size_t l = L; l-- > 0;) {
            g.w[l] = matmul_tn(dz, cache.stage[l]);
            g.b[l] = colsum(dz);
            if (l == 0) break;
            Mat dprev = matmul(dz, m.w[l]);
            relu_mask_inplace(dprev, cache.stage[l]);
            dz = std::move(dprev);
        }
    } else {
        const auto& a = m.arch;
        int c1 = a.conv_channels[0], c2 = a.conv_channels[1];
        int h = a.in_h, w = a.in_w;
        const Mat& x0 = cache.stage[0];
        const Mat& r1 = cache.stage[1];
        const Mat& p1 = cache.stage[2];
        const Mat& r2 = cache.stage[3];
        const Mat& p2 = cache.stage[4];
        const Mat& fc = cache.stage[5];

        g.w[3] = matmul_tn(dlogits, fc);
        g.b[3] = colsum(dlogits);
        Mat dfc = matmul(dlogits, m.w[3]);
        relu_mask_inplace(dfc, fc);

        g.w[2] = matmul_tn(dfc, p2);
        g.b[2] = colsum(dfc);
        Mat dp2 = matmul(dfc, m.w[2]);

        Mat dr2 = avgpool2_backward(dp2, c2, h / 2, w / 2);
        relu_mask_inplace(dr2, r2);
        Mat dp1 = conv3x3_backward(p1, m.w[1], dr2, c1, h / 2, w / 2, g.w[1], g.b[1]);

        Mat dr1 = avgpool2_backward(dp1, c1, h, w);
        relu_mask_inplace(dr1, r1);
        conv3x3_backward(x0, m.w[0], dr1, a.in_c, h, w, g.w[0], g.b[0]);
    }
    return g;
}

Mat dlogits_from_dprobs(const Mat& probs, const Mat& dprobs) {
    Mat dz(probs.rows, probs.cols);
    for (int i = 0; i < probs.rows; ++i) {
        const double* p = probs.row(i);
        const double* g = dprobs.row(i);
        double dot = 0.0;
        for (int j = 0; j < probs.cols; ++j) dot += g[j] * p[j];
        double* o = dz.row(i);
        for (int j = 0; j < probs.cols; ++j) o[j] = p[j] * (g[j] - dot);
    }
    return dz;
}

double cross_entropy_value(const Mat& probs, const Mat& targets) {
    double s = 0.0;
    for (int i = 0; i < probs.rows; ++i) {
        const double* p = probs.row(i);
        const double* t = targets.row(i);
        for (int j = 0; j < probs.cols; ++j)
            if (t[j] != 0.0) s -= t[j] * clamped_log(p[j]);
    }
    return s / probs.rows;
}

double mse_value(const Mat& probs, const Mat& targets) {
    double s = 0.0;
    for (size_t i = 0; i < probs.a.size(); ++i) {
        double d = probs.a[i] - targets.a[i];
        s += d * d;
    }
    return s / probs.rows;
}

double entropy_value(const Mat& probs) {
    double s = 0.0;
    for (int i = 0; i < probs.rows; ++i) {
        const double* p = probs.row(i);
        for (int j = 0; j < probs.cols; ++j)
            if (p[j] > 0.0) s -= p[j] * clamped_log(p[j]);
    }
    return s / probs.rows;
}

namespace {

void validate_targets(const Mat& targets) {
    for (int i = 0; i < targets.rows; ++i) {
        const double* t = targets.row(i);
        double sum = 0.0;
        for (int j = 0; j < targets.cols; ++j) {
            if (t[j] < 0.0) throw InvalidInput("targets: negative entry in row " + std::to_string(i));
            sum += t[j];
        }
        if (std::abs(sum - 1.0) > 1e-6)
            throw InvalidInput("targets: row " + std::to_string(i) + " sums to " + std::to_string(sum));
    }
}

} // namespace

LossResult loss_and_grads(const Model& m, const Mat& inputs, const Mat& targets, LossSpec spec) {
    if (inputs.rows != targets.rows || targets.cols != m.arch.classes)
        throw InvalidInput("loss_and_grads: batch/target shape mismatch");
    if (inputs.rows == 0) throw InvalidInput("loss_and_grads: empty batch");
    validate_targets(targets);

    ForwardCache cache = forward_cached(m, inputs);
    if (!cache.logits.all_finite()) throw NumericalError("forward pass produced non-finite activations");

    const Mat& P = cache.probs;
    int B = inputs.rows;
    LossResult out;
    Mat dlogits(P.rows, P.cols);

    switch (spec) {
    case LossSpec::CrossEntropy: {
        out.loss = cross_entropy_value(P, targets);
        for (size_t i = 0; i < P.a.size(); ++i) dlogits.a[i] = (P.a[i] - targets.a[i]) / B;
        break;
    }
    case LossSpec::Mse: {
        out.loss = mse_value(P, targets);
        Mat dprobs(P.rows, P.cols);
        for (size_t i = 0; i < P.a.size(); ++i) dprobs.a[i] = 2.0 * (P.a[i] - targets.a[i]) / B;
        dlogits = dlogits_from_dprobs(P, dprobs);
        break;
    }
    case LossSpec::CrossEntropyMinusEntropy: {
        out.loss = cross_entropy_value(P, targets) - entropy_value(P);
        Mat dprobs(P.rows, P.cols); // gradient of −H w.r.t. probabilities
        for (size_t i = 0; i < P.a.size(); ++i) dprobs.a[i] = (clamped_log(P.a[i]) + 1.0) / B;
        dlogits = dlogits_from_dprobs(P, dprobs);
        for (size_t i = 0; i < P.a.size(); ++i) dlogits.a[i] += (P.a[i] - targets.a[i]) / B;
        break;
    }
    }

    out.grads = backward_logits(m, cache, dlogits);
    return out;
}

OptimState OptimState::make(const Model& m, double lr, double momentum, double weight_decay) {
    OptimState s;
    s.lr = lr;
    s.momentum = momentum;
    s.weight_decay = weight_decay;
    s.velocity = Grads::zeros_like(m);
    return s;
}

void sgd_step(Model& m, OptimState& state, const Grads& grads) {
    for (size_t l = 0; l < m.w.size(); ++l) {
        if (grads.w[l].rows != m.w[l].rows || grads.w[l].cols != m.w[l].cols)
            throw InvalidInput("sgd_step: gradient shape mismatch");
        auto& v = state.velocity.w[l];
        for (size_t i = 0; i < m.w[l].a.size(); ++i) {
            v.a[i] = state.momentum * v.a[i] + grads.w[l].a[i] + state.weight_decay * m.w[l].a[i];
            m.w[l].a[i] -= state.lr * v.a[i];
        }
        auto& vb = state.velocity.b[l];
        for (size_t i = 0; i < m.b[l].size(); ++i) {
            vb[i] = state.momentum * vb[i] + grads.b[l][i] + state.weight_decay * m.b[l][i];
            m.b[l][i] -= state.lr * vb[i];
        }
    }
}

namespace {

void put_u32(std::ofstream& f, uint32_t v) { f.write(reinterpret_cast<const char*>(&v), 4); }

uint32_t get_u32(std::ifstream& f) {
    uint32_t v = 0;
    f.read(reinterpret_cast<char*>(&v), 4);
    if (!f) throw FormatError("checkpoint: truncated header");
    return v;
}

} // namespace

void save_checkpoint(const Model& m, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw FormatError("checkpoint: cannot open " + path + " for writing");
    f.write("DMX1", 4);
    put_u32(f, 1); // version
    uint8_t kind = m.arch.kind == ArchKind::Mlp ? 0 : 1;
    uint8_t tag = static_cast<uint8_t>(m.tag);
    uint16_t reserved = 0;
    f.write(reinterpret_cast<const char*>(&kind), 1);
    f.write(reinterpret_cast<const char*>(&tag), 1);
    f.write(reinterpret_cast<const char*>(&reserved), 2);
    put_u32(f, static_cast<uint32_t>(m.arch.classes));
    if (m.arch.kind == ArchKind::Mlp) {
        put_u32(f, static_cast<uint32_t>(m.arch.input_dim));
        put_u32(f, static_cast<uint32_t>(m.arch.hidden.size()));
        for (int h : m.arch.hidden) put_u32(f, static_cast<uint32_t>(h));
    } else {
        put_u32(f, static_cast<uint32_t>(m.arch.in_c));
        put_u32(f, static_cast<uint32_t>(m.arch.in_h));
        put_u32(f, static_cast<uint32_t>(m.arch.in_w));
        put_u32(f, static_cast<uint32_t>(m.arch.conv_channels.size()));
        for (int c : m.arch.conv_channels) put_u32(f, static_cast<uint32_t>(c));
        put_u32(f, static_cast<uint32_t>(m.arch.fc_hidden));
    }
    for (size_t l = 0; l < m.w.size(); ++l) {
        for (double v : m.w[l].a) {
            float fv = static_cast<float>(v);
            f.write(reinterpret_cast<const char*>(&fv), 4);
        }
        for (double v : m.b[l]) {
            float fv = static_cast<float>(v);
            f.write(reinterpret_cast<const char*>(&fv), 4);
        }
    }
    if (!f) throw FormatError("checkpoint: write failed for " + path);
}

Model load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("checkpoint: cannot open " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, "DMX1", 4) != 0) throw FormatError("checkpoint: bad magic");
    uint32_t version = get_u32(f);
    if (version != 1) throw FormatError("checkpoint: unsupported version " + std::to_string(version));
    uint8_t kind = 0, tag = 0;
    uint16_t reserved = 0;
    f.read(reinterpret_cast<char*>(&kind), 1);
    f.read(reinterpret_cast<char*>(&tag), 1);
    f.read(reinterpret_cast<char*>(&reserved), 2);
    if (!f || kind > 1) throw FormatError("checkpoint: bad architecture kind");

    ArchSpec arch;
    arch.classes = static_cast<int>(get_u32(f));
    if (kind == 0) {
        arch.kind = ArchKind::Mlp;
        arch.input_dim = static_cast<int>(get_u32(f));
        uint32_t nh = get_u32(f);
        arch.hidden.assign(nh, 0);
        for (uint32_t i = 0; i < nh; ++i) arch.hidden[i] = static_cast<int>(get_u32(f));
    } else {
        arch.kind = ArchKind::Cnn;
        arch.in_c = static_cast<int>(get_u32(f));
        arch.in_h = static_cast<int>(get_u32(f));
        arch.in_w = static_cast<int>(get_u32(f));
        uint32_t nc = get_u32(f);
        arch.conv_channels.assign(nc, 0);
        for (uint32_t i = 0; i < nc; ++i) arch.conv_channels[i] = static_cast<int>(get_u32(f));
        arch.fc_hidden = static_cast<int>(get_u32(f));
    }
    arch.validate();

    Rng dummy(0);
    Model m = Model::init(arch, tag, dummy);
    for (size_t l = 0; l < m.w.size(); ++l) {
        for (double& v : m.w[l].a) {
            float fv = 0;
            f.read(reinterpret_cast<char*>(&fv), 4);
            if (!f) throw FormatError("checkpoint: truncated parameter data");
            v = fv;
        }
        for (double& v : m.b[l]) {
            float fv = 0;
            f.read(reinterpret_cast<char*>(&fv), 4);
            if (!f) throw FormatError("checkpoint: truncated parameter data");
            v = fv;
        }
    }
    f.peek();
    if (!f.eof()) throw FormatError("checkpoint: trailing bytes");
    return m;
}

} // namespace dmx
