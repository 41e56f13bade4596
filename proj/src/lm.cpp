// SPDX-License-Identifier: Apache-2.0
#include "stylenews/lm.hpp"

#include <algorithm>
#include <cmath>

#include "stylenews/errors.hpp"
#include "stylenews/rng.hpp"
#include "stylenews/serdes.hpp"

namespace stylenews {

namespace {
constexpr double kRmsEps = 1e-5;
constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;
}  // namespace

void GeneratorConfig::validate() const {
    if (!(learning_rate > 0.0)) throw Error(errc::ConfigInvalid, "learning rate must be > 0");
    if (warmup_steps < 0) throw Error(errc::ConfigInvalid, "warmup steps must be >= 0");
    if (!(nucleus_mass > 0.0 && nucleus_mass <= 1.0))
        throw Error(errc::ConfigInvalid, "nucleus mass must be in (0,1]");
    if (!(temperature > 0.0)) throw Error(errc::ConfigInvalid, "temperature must be > 0");
    if (max_length < 2) throw Error(errc::ConfigInvalid, "max length must be >= 2");
    if (train_batch_size < 1 || generation_batch_size < 1)
        throw Error(errc::ConfigInvalid, "batch sizes must be >= 1");
}

void LmDims::validate() const {
    if (d_model < 1 || n_layers < 1 || n_heads < 1 || max_context < 2)
        throw Error(errc::ConfigInvalid, "invalid model dimensions");
    if (d_model % n_heads != 0)
        throw Error(errc::ConfigInvalid, "d_model must be divisible by n_heads");
}

// ---------------------------------------------------------------------------
// embedding view

namespace {

class WteView : public EmbeddingSource {
public:
    WteView(std::shared_ptr<const std::vector<double>> params, size_t wte_offset, int rows,
            int width, TokenId unknown)
        : params_(std::move(params)), offset_(wte_offset), rows_(rows), width_(width),
          unknown_(unknown) {}

    int width() const override { return width_; }
    int rows() const override { return rows_; }
    TokenId unknown_id() const override { return unknown_; }
    const double* row(TokenId id) const override {
        return params_->data() + offset_ +
               static_cast<size_t>(clamp_id(id)) * static_cast<size_t>(width_);
    }
    uint64_t content_hash() const override {
        return fnv1a(params_->data() + offset_,
                     static_cast<size_t>(rows_) * static_cast<size_t>(width_) * sizeof(double));
    }

private:
    std::shared_ptr<const std::vector<double>> params_;
    size_t offset_;
    int rows_;
    int width_;
    TokenId unknown_;
};

inline void matvec(const double* m, int rows, int cols, const double* in, double* out) {
    for (int r = 0; r < rows; ++r) {
        double acc = 0.0;
        const double* mr = m + static_cast<size_t>(r) * cols;
        for (int c = 0; c < cols; ++c) acc += mr[c] * in[c];
        out[r] = acc;
    }
}

// dIn += M^T dOut;  dM += dOut x in
inline void matvec_backward(const double* m, double* dm, int rows, int cols, const double* in,
                            const double* dout, double* din) {
    for (int r = 0; r < rows; ++r) {
        const double g = dout[r];
        if (g == 0.0) continue;
        const double* mr = m + static_cast<size_t>(r) * cols;
        double* dmr = dm + static_cast<size_t>(r) * cols;
        for (int c = 0; c < cols; ++c) {
            dmr[c] += g * in[c];
            din[c] += g * mr[c];
        }
    }
}

inline void rmsnorm(const double* x, int n, double* y) {
    double ms = 0.0;
    for (int i = 0; i < n; ++i) ms += x[i] * x[i];
    const double inv = 1.0 / std::sqrt(ms / n + kRmsEps);
    for (int i = 0; i < n; ++i) y[i] = x[i] * inv;
}

inline void rmsnorm_backward(const double* x, int n, const double* dy, double* dx) {
    double ms = 0.0;
    double dot = 0.0;
    for (int i = 0; i < n; ++i) ms += x[i] * x[i];
    const double inv = 1.0 / std::sqrt(ms / n + kRmsEps);
    for (int i = 0; i < n; ++i) dot += dy[i] * x[i];
    const double k = inv * inv * inv * dot / n;
    for (int i = 0; i < n; ++i) dx[i] += inv * dy[i] - k * x[i];
}

}  // namespace

// ---------------------------------------------------------------------------
// construction

TransformerLM::TransformerLM(Vocabulary vocab, LmDims dims, uint64_t seed)
    : vocab_(std::move(vocab)), dims_(dims) {
    dims_.validate();
    const size_t v = static_cast<size_t>(vocab_.size());
    const size_t d = static_cast<size_t>(dims_.d_model);
    const size_t hid = 4 * d;
    size_t cursor = 0;

    off_.wte = cursor;
    cursor += v * d;
    off_.wpe = cursor;
    cursor += static_cast<size_t>(dims_.max_context) * d;
    for (int l = 0; l < dims_.n_layers; ++l) {
        off_.wq.push_back(cursor);
        cursor += d * d;
        off_.wk.push_back(cursor);
        cursor += d * d;
        off_.wv.push_back(cursor);
        cursor += d * d;
        off_.wo.push_back(cursor);
        cursor += d * d;
        off_.w1.push_back(cursor);
        cursor += hid * d;
        off_.w2.push_back(cursor);
        cursor += d * hid;
    }
    off_.head = cursor;
    cursor += v * d;
    off_.total = cursor;

    params_ = std::make_shared<std::vector<double>>(off_.total, 0.0);
    adam_m_.assign(off_.total, 0.0);
    adam_v_.assign(off_.total, 0.0);
    init_params_(seed);
}

void TransformerLM::init_params_(uint64_t seed) {
    Rng rng = Rng::derive(seed, "lm/init");
    const double std_init = 0.08;
    for (auto& p : *params_) p = rng.normal(0.0, std_init);
}

std::shared_ptr<EmbeddingSource> TransformerLM::embedding_view() const {
    return std::make_shared<WteView>(params_, off_.wte, vocab_.size(), dims_.d_model,
                                     vocab_.unknown_id());
}

// ---------------------------------------------------------------------------
// forward

std::vector<double> TransformerLM::forward_logits_(const std::vector<TokenId>& tokens) const {
    const int t_len = static_cast<int>(tokens.size());
    if (t_len < 1) throw Error(errc::EmptyInput, "empty prefix");
    if (t_len > dims_.max_context)
        throw Error(errc::ConfigInvalid, "sequence length " + std::to_string(t_len) +
                                             " exceeds model context " +
                                             std::to_string(dims_.max_context));
    const int d = dims_.d_model;
    const int hid = 4 * d;
    const int dh = d / dims_.n_heads;
    const double iscale = 1.0 / std::sqrt(static_cast<double>(dh));
    const double* P = params_->data();

    std::vector<double> x(static_cast<size_t>(t_len) * d);
    for (int t = 0; t < t_len; ++t) {
        const TokenId tok = tokens[static_cast<size_t>(t)];
        const double* e = P + off_.wte + static_cast<size_t>(tok) * d;
        const double* pe = P + off_.wpe + static_cast<size_t>(t) * d;
        for (int j = 0; j < d; ++j) x[static_cast<size_t>(t) * d + j] = e[j] + pe[j];
    }

    std::vector<double> a(x.size()), q(x.size()), k(x.size()), v(x.size()), ctx(x.size()),
        tmp(static_cast<size_t>(d)), h1(static_cast<size_t>(hid));
    for (int l = 0; l < dims_.n_layers; ++l) {
        for (int t = 0; t < t_len; ++t) rmsnorm(&x[static_cast<size_t>(t) * d], d, &a[static_cast<size_t>(t) * d]);
        for (int t = 0; t < t_len; ++t) {
            matvec(P + off_.wq[static_cast<size_t>(l)], d, d, &a[static_cast<size_t>(t) * d], &q[static_cast<size_t>(t) * d]);
            matvec(P + off_.wk[static_cast<size_t>(l)], d, d, &a[static_cast<size_t>(t) * d], &k[static_cast<size_t>(t) * d]);
            matvec(P + off_.wv[static_cast<size_t>(l)], d, d, &a[static_cast<size_t>(t) * d], &v[static_cast<size_t>(t) * d]);
        }
        for (int h = 0; h < dims_.n_heads; ++h) {
            const int hd = h * dh;
            std::vector<double> scores;
            for (int t = 0; t < t_len; ++t) {
                scores.assign(static_cast<size_t>(t) + 1, 0.0);
                double mx = -1e300;
                for (int u = 0; u <= t; ++u) {
                    double s = 0.0;
                    for (int j = 0; j < dh; ++j)
                        s += q[static_cast<size_t>(t) * d + hd + j] * k[static_cast<size_t>(u) * d + hd + j];
                    s *= iscale;
                    scores[static_cast<size_t>(u)] = s;
                    mx = std::max(mx, s);
                }
                double sum = 0.0;
                for (int u = 0; u <= t; ++u) {
                    scores[static_cast<size_t>(u)] = std::exp(scores[static_cast<size_t>(u)] - mx);
                    sum += scores[static_cast<size_t>(u)];
                }
                for (int j = 0; j < dh; ++j) {
                    double acc = 0.0;
                    for (int u = 0; u <= t; ++u)
                        acc += scores[static_cast<size_t>(u)] * v[static_cast<size_t>(u) * d + hd + j];
                    ctx[static_cast<size_t>(t) * d + hd + j] = acc / sum;
                }
            }
        }
        for (int t = 0; t < t_len; ++t) {
            matvec(P + off_.wo[static_cast<size_t>(l)], d, d, &ctx[static_cast<size_t>(t) * d], tmp.data());
            for (int j = 0; j < d; ++j) x[static_cast<size_t>(t) * d + j] += tmp[j];
        }
        for (int t = 0; t < t_len; ++t) {
            rmsnorm(&x[static_cast<size_t>(t) * d], d, &a[static_cast<size_t>(t) * d]);
            matvec(P + off_.w1[static_cast<size_t>(l)], hid, d, &a[static_cast<size_t>(t) * d], h1.data());
            for (int j = 0; j < hid; ++j) h1[static_cast<size_t>(j)] = std::max(0.0, h1[static_cast<size_t>(j)]);
            matvec(P + off_.w2[static_cast<size_t>(l)], d, hid, h1.data(), tmp.data());
            for (int j = 0; j < d; ++j) x[static_cast<size_t>(t) * d + j] += tmp[j];
        }
    }

    std::vector<double> xf(static_cast<size_t>(d));
    rmsnorm(&x[static_cast<size_t>(t_len - 1) * d], d, xf.data());
    std::vector<double> logits(static_cast<size_t>(vocab_.size()));
    matvec(P + off_.head, vocab_.size(), d, xf.data(), logits.data());
    return logits;
}

std::vector<double> TransformerLM::next_token_distribution(
    const std::vector<TokenId>& prefix) const {
    return softmax(forward_logits_(prefix));
}

// ---------------------------------------------------------------------------
// loss + backward

double TransformerLM::accumulate_gradients_(const std::vector<TokenId>& tokens, double scale,
                                            std::vector<double>& grad) const {
    const int t_len = static_cast<int>(tokens.size());
    if (t_len < 2) return 0.0;  // nothing to predict
    if (t_len > dims_.max_context)
        throw Error(errc::ConfigInvalid, "sequence length " + std::to_string(t_len) +
                                             " exceeds model context " +
                                             std::to_string(dims_.max_context));
    const int d = dims_.d_model;
    const int hid = 4 * d;
    const int nl = dims_.n_layers;
    const int nh = dims_.n_heads;
    const int dh = d / nh;
    const int vsz = vocab_.size();
    const double iscale = 1.0 / std::sqrt(static_cast<double>(dh));
    const double* P = params_->data();
    double* G = grad.data();
    const size_t td = static_cast<size_t>(t_len) * d;

    // forward with caches
    std::vector<std::vector<double>> xin(static_cast<size_t>(nl) + 1), a1(static_cast<size_t>(nl)),
        qs(static_cast<size_t>(nl)), ks(static_cast<size_t>(nl)), vs(static_cast<size_t>(nl)),
        ctxs(static_cast<size_t>(nl)), xmid(static_cast<size_t>(nl)), a2(static_cast<size_t>(nl)),
        h1s(static_cast<size_t>(nl));
    std::vector<std::vector<std::vector<double>>> atts(static_cast<size_t>(nl));

    xin[0].assign(td, 0.0);
    for (int t = 0; t < t_len; ++t) {
        const double* e = P + off_.wte + static_cast<size_t>(tokens[static_cast<size_t>(t)]) * d;
        const double* pe = P + off_.wpe + static_cast<size_t>(t) * d;
        for (int j = 0; j < d; ++j) xin[0][static_cast<size_t>(t) * d + j] = e[j] + pe[j];
    }

    for (int l = 0; l < nl; ++l) {
        const auto& x = xin[static_cast<size_t>(l)];
        a1[static_cast<size_t>(l)].assign(td, 0.0);
        qs[static_cast<size_t>(l)].assign(td, 0.0);
        ks[static_cast<size_t>(l)].assign(td, 0.0);
        vs[static_cast<size_t>(l)].assign(td, 0.0);
        ctxs[static_cast<size_t>(l)].assign(td, 0.0);
        auto& a = a1[static_cast<size_t>(l)];
        auto& q = qs[static_cast<size_t>(l)];
        auto& k = ks[static_cast<size_t>(l)];
        auto& v = vs[static_cast<size_t>(l)];
        auto& ctx = ctxs[static_cast<size_t>(l)];
        for (int t = 0; t < t_len; ++t) {
            rmsnorm(&x[static_cast<size_t>(t) * d], d, &a[static_cast<size_t>(t) * d]);
            matvec(P + off_.wq[static_cast<size_t>(l)], d, d, &a[static_cast<size_t>(t) * d], &q[static_cast<size_t>(t) * d]);
            matvec(P + off_.wk[static_cast<size_t>(l)], d, d, &a[static_cast<size_t>(t) * d], &k[static_cast<size_t>(t) * d]);
            matvec(P + off_.wv[static_cast<size_t>(l)], d, d, &a[static_cast<size_t>(t) * d], &v[static_cast<size_t>(t) * d]);
        }
        auto& att = atts[static_cast<size_t>(l)];
        att.assign(static_cast<size_t>(nh), std::vector<double>(static_cast<size_t>(t_len) * t_len, 0.0));
        for (int h = 0; h < nh; ++h) {
            const int hd = h * dh;
            for (int t = 0; t < t_len; ++t) {
                double mx = -1e300;
                for (int u = 0; u <= t; ++u) {
                    double s = 0.0;
                    for (int j = 0; j < dh; ++j)
                        s += q[static_cast<size_t>(t) * d + hd + j] * k[static_cast<size_t>(u) * d + hd + j];
                    s *= iscale;
                    att[static_cast<size_t>(h)][static_cast<size_t>(t) * t_len + u] = s;
                    mx = std::max(mx, s);
                }
                double sum = 0.0;
                for (int u = 0; u <= t; ++u) {
                    double& e = att[static_cast<size_t>(h)][static_cast<size_t>(t) * t_len + u];
                    e = std::exp(e - mx);
                    sum += e;
                }
                for (int u = 0; u <= t; ++u)
                    att[static_cast<size_t>(h)][static_cast<size_t>(t) * t_len + u] /= sum;
                for (int j = 0; j < dh; ++j) {
                    double acc = 0.0;
                    for (int u = 0; u <= t; ++u)
                        acc += att[static_cast<size_t>(h)][static_cast<size_t>(t) * t_len + u] *
                               v[static_cast<size_t>(u) * d + hd + j];
                    ctx[static_cast<size_t>(t) * d + hd + j] = acc;
                }
            }
        }
        xmid[static_cast<size_t>(l)] = x;
        auto& xm = xmid[static_cast<size_t>(l)];
        std::vector<double> tmp(static_cast<size_t>(d));
        for (int t = 0; t < t_len; ++t) {
            matvec(P + off_.wo[static_cast<size_t>(l)], d, d, &ctx[static_cast<size_t>(t) * d], tmp.data());
            for (int j = 0; j < d; ++j) xm[static_cast<size_t>(t) * d + j] += tmp[j];
        }
        a2[static_cast<size_t>(l)].assign(td, 0.0);
        h1s[static_cast<size_t>(l)].assign(static_cast<size_t>(t_len) * hid, 0.0);
        xin[static_cast<size_t>(l) + 1] = xm;
        auto& xo = xin[static_cast<size_t>(l) + 1];
        for (int t = 0; t < t_len; ++t) {
            rmsnorm(&xm[static_cast<size_t>(t) * d], d, &a2[static_cast<size_t>(l)][static_cast<size_t>(t) * d]);
            matvec(P + off_.w1[static_cast<size_t>(l)], hid, d,
                   &a2[static_cast<size_t>(l)][static_cast<size_t>(t) * d],
                   &h1s[static_cast<size_t>(l)][static_cast<size_t>(t) * hid]);
            for (int j = 0; j < hid; ++j) {
                double& hv = h1s[static_cast<size_t>(l)][static_cast<size_t>(t) * hid + j];
                hv = std::max(0.0, hv);
            }
            matvec(P + off_.w2[static_cast<size_t>(l)], d, hid,
                   &h1s[static_cast<size_t>(l)][static_cast<size_t>(t) * hid], tmp.data());
            for (int j = 0; j < d; ++j) xo[static_cast<size_t>(t) * d + j] += tmp[j];
        }
    }

    const auto& xlast = xin[static_cast<size_t>(nl)];
    std::vector<double> xf(td);
    for (int t = 0; t < t_len; ++t)
        rmsnorm(&xlast[static_cast<size_t>(t) * d], d, &xf[static_cast<size_t>(t) * d]);

    // losses and dxf via the head
    double nll_sum = 0.0;
    std::vector<double> dxf(td, 0.0);
    std::vector<double> logits(static_cast<size_t>(vsz));
    for (int t = 0; t + 1 < t_len; ++t) {
        matvec(P + off_.head, vsz, d, &xf[static_cast<size_t>(t) * d], logits.data());
        const TokenId target = tokens[static_cast<size_t>(t) + 1];
        double mx = logits[0];
        for (double s : logits) mx = std::max(mx, s);
        double sum = 0.0;
        for (double s : logits) sum += std::exp(s - mx);
        nll_sum += std::log(sum) - (logits[static_cast<size_t>(target)] - mx);

        for (int w = 0; w < vsz; ++w) {
            const double p = std::exp(logits[static_cast<size_t>(w)] - mx) / sum;
            const double dl = scale * (p - (w == target ? 1.0 : 0.0));
            if (dl == 0.0) continue;
            const double* hr = P + off_.head + static_cast<size_t>(w) * d;
            double* ghr = G + off_.head + static_cast<size_t>(w) * d;
            const double* xft = &xf[static_cast<size_t>(t) * d];
            double* dxft = &dxf[static_cast<size_t>(t) * d];
            for (int j = 0; j < d; ++j) {
                ghr[j] += dl * xft[j];
                dxft[j] += dl * hr[j];
            }
        }
    }

    std::vector<double> dx(td, 0.0);
    for (int t = 0; t < t_len; ++t)
        rmsnorm_backward(&xlast[static_cast<size_t>(t) * d], d, &dxf[static_cast<size_t>(t) * d],
                         &dx[static_cast<size_t>(t) * d]);

    // layers in reverse
    std::vector<double> tmpd(static_cast<size_t>(d)), tmph(static_cast<size_t>(hid));
    for (int l = nl - 1; l >= 0; --l) {
        const auto& xm = xmid[static_cast<size_t>(l)];
        const auto& a2l = a2[static_cast<size_t>(l)];
        const auto& h1l = h1s[static_cast<size_t>(l)];
        // MLP block: xout = xm + W2 relu(W1 a2(xm))
        std::vector<double> dxm(td, 0.0);
        for (int t = 0; t < t_len; ++t) {
            const double* dxo = &dx[static_cast<size_t>(t) * d];
            for (int j = 0; j < d; ++j) dxm[static_cast<size_t>(t) * d + j] += dxo[j];
            // through W2
            std::fill(tmph.begin(), tmph.end(), 0.0);
            matvec_backward(P + off_.w2[static_cast<size_t>(l)], G + off_.w2[static_cast<size_t>(l)], d, hid,
                            &h1l[static_cast<size_t>(t) * hid], dxo, tmph.data());
            // relu
            for (int j = 0; j < hid; ++j)
                if (h1l[static_cast<size_t>(t) * hid + j] <= 0.0) tmph[static_cast<size_t>(j)] = 0.0;
            // through W1
            std::fill(tmpd.begin(), tmpd.end(), 0.0);
            matvec_backward(P + off_.w1[static_cast<size_t>(l)], G + off_.w1[static_cast<size_t>(l)], hid, d,
                            &a2l[static_cast<size_t>(t) * d], tmph.data(), tmpd.data());
            rmsnorm_backward(&xm[static_cast<size_t>(t) * d], d, tmpd.data(),
                             &dxm[static_cast<size_t>(t) * d]);
        }

        // attention block: xm = xin + Wo ctx
        const auto& x = xin[static_cast<size_t>(l)];
        const auto& a = a1[static_cast<size_t>(l)];
        const auto& q = qs[static_cast<size_t>(l)];
        const auto& k = ks[static_cast<size_t>(l)];
        const auto& v = vs[static_cast<size_t>(l)];
        const auto& ctx = ctxs[static_cast<size_t>(l)];
        const auto& att = atts[static_cast<size_t>(l)];

        std::vector<double> dxin(td, 0.0), dctx(td, 0.0), dq(td, 0.0), dk(td, 0.0), dv(td, 0.0),
            da(td, 0.0);
        for (int t = 0; t < t_len; ++t) {
            const double* dxm_t = &dxm[static_cast<size_t>(t) * d];
            for (int j = 0; j < d; ++j) dxin[static_cast<size_t>(t) * d + j] += dxm_t[j];
            matvec_backward(P + off_.wo[static_cast<size_t>(l)], G + off_.wo[static_cast<size_t>(l)], d, d,
                            &ctx[static_cast<size_t>(t) * d], dxm_t, &dctx[static_cast<size_t>(t) * d]);
        }
        std::vector<double> datt(static_cast<size_t>(t_len)), dscore(static_cast<size_t>(t_len));
        for (int h = 0; h < nh; ++h) {
            const int hd = h * dh;
            const auto& ah = att[static_cast<size_t>(h)];
            for (int t = 0; t < t_len; ++t) {
                double dot = 0.0;
                for (int u = 0; u <= t; ++u) {
                    double s = 0.0;
                    for (int j = 0; j < dh; ++j)
                        s += dctx[static_cast<size_t>(t) * d + hd + j] * v[static_cast<size_t>(u) * d + hd + j];
                    datt[static_cast<size_t>(u)] = s;
                    dot += ah[static_cast<size_t>(t) * t_len + u] * s;
                    for (int j = 0; j < dh; ++j)
                        dv[static_cast<size_t>(u) * d + hd + j] +=
                            ah[static_cast<size_t>(t) * t_len + u] * dctx[static_cast<size_t>(t) * d + hd + j];
                }
                for (int u = 0; u <= t; ++u)
                    dscore[static_cast<size_t>(u)] =
                        ah[static_cast<size_t>(t) * t_len + u] * (datt[static_cast<size_t>(u)] - dot);
                for (int u = 0; u <= t; ++u) {
                    const double ds = dscore[static_cast<size_t>(u)] * iscale;
                    if (ds == 0.0) continue;
                    for (int j = 0; j < dh; ++j) {
                        dq[static_cast<size_t>(t) * d + hd + j] += ds * k[static_cast<size_t>(u) * d + hd + j];
                        dk[static_cast<size_t>(u) * d + hd + j] += ds * q[static_cast<size_t>(t) * d + hd + j];
                    }
                }
            }
        }
        for (int t = 0; t < t_len; ++t) {
            matvec_backward(P + off_.wq[static_cast<size_t>(l)], G + off_.wq[static_cast<size_t>(l)], d, d,
                            &a[static_cast<size_t>(t) * d], &dq[static_cast<size_t>(t) * d], &da[static_cast<size_t>(t) * d]);
            matvec_backward(P + off_.wk[static_cast<size_t>(l)], G + off_.wk[static_cast<size_t>(l)], d, d,
                            &a[static_cast<size_t>(t) * d], &dk[static_cast<size_t>(t) * d], &da[static_cast<size_t>(t) * d]);
            matvec_backward(P + off_.wv[static_cast<size_t>(l)], G + off_.wv[static_cast<size_t>(l)], d, d,
                            &a[static_cast<size_t>(t) * d], &dv[static_cast<size_t>(t) * d], &da[static_cast<size_t>(t) * d]);
            rmsnorm_backward(&x[static_cast<size_t>(t) * d], d, &da[static_cast<size_t>(t) * d],
                             &dxin[static_cast<size_t>(t) * d]);
        }
        dx = std::move(dxin);
    }

    for (int t = 0; t < t_len; ++t) {
        const double* dx0 = &dx[static_cast<size_t>(t) * d];
        double* gwte = G + off_.wte + static_cast<size_t>(tokens[static_cast<size_t>(t)]) * d;
        double* gwpe = G + off_.wpe + static_cast<size_t>(t) * d;
        for (int j = 0; j < d; ++j) {
            gwte[j] += dx0[j];
            gwpe[j] += dx0[j];
        }
    }
    return nll_sum;
}

double TransformerLM::loss_and_gradients(const std::vector<std::vector<TokenId>>& sequences,
                                         std::vector<double>& grad_out) const {
    grad_out.assign(off_.total, 0.0);
    size_t targets = 0;
    for (const auto& s : sequences)
        if (s.size() >= 2) targets += s.size() - 1;
    if (targets == 0) throw Error(errc::EmptyInput, "batch contains no predictable tokens");
    const double scale = 1.0 / static_cast<double>(targets);
    double nll = 0.0;
    for (const auto& s : sequences) nll += accumulate_gradients_(s, scale, grad_out);
    return nll * scale;
}

double TransformerLM::mean_nll(const std::vector<std::vector<TokenId>>& sequences) const {
    std::vector<double> scratch;
    return loss_and_gradients(sequences, scratch);
}

double TransformerLM::train_batch(const std::vector<std::vector<TokenId>>& sequences,
                                  const GeneratorConfig& config) {
    config.validate();
    std::vector<double> grad;
    const double loss = loss_and_gradients(sequences, grad);
    if (!std::isfinite(loss))
        throw Error(errc::NonFiniteLoss, "non-finite loss at step " + std::to_string(step_ + 1));

    ++step_;
    const double warm = config.warmup_steps > 0
                            ? std::min(1.0, static_cast<double>(step_) /
                                                static_cast<double>(config.warmup_steps))
                            : 1.0;
    const double lr = config.learning_rate * warm;
    auto& p = *params_;
    for (size_t i = 0; i < p.size(); ++i) {
        adam_m_[i] = kAdamBeta1 * adam_m_[i] + (1.0 - kAdamBeta1) * grad[i];
        adam_v_[i] = kAdamBeta2 * adam_v_[i] + (1.0 - kAdamBeta2) * grad[i] * grad[i];
        const double mhat = adam_m_[i] / (1.0 - std::pow(kAdamBeta1, static_cast<double>(step_)));
        const double vhat = adam_v_[i] / (1.0 - std::pow(kAdamBeta2, static_cast<double>(step_)));
        p[i] -= lr * (mhat / (std::sqrt(vhat) + kAdamEps) + config.weight_decay * p[i]);
    }
    return loss;
}

std::vector<double> TransformerLM::snapshot() const {
    std::vector<double> blob;
    blob.reserve(1 + 3 * off_.total);
    blob.push_back(static_cast<double>(step_));
    blob.insert(blob.end(), params_->begin(), params_->end());
    blob.insert(blob.end(), adam_m_.begin(), adam_m_.end());
    blob.insert(blob.end(), adam_v_.begin(), adam_v_.end());
    return blob;
}

void TransformerLM::restore(const std::vector<double>& blob) {
    if (blob.size() != 1 + 3 * off_.total)
        throw Error(errc::CorruptCheckpoint, "snapshot size mismatch");
    step_ = static_cast<int64_t>(blob[0]);
    auto it = blob.begin() + 1;
    std::copy(it, it + static_cast<std::ptrdiff_t>(off_.total), params_->begin());
    it += static_cast<std::ptrdiff_t>(off_.total);
    std::copy(it, it + static_cast<std::ptrdiff_t>(off_.total), adam_m_.begin());
    it += static_cast<std::ptrdiff_t>(off_.total);
    std::copy(it, it + static_cast<std::ptrdiff_t>(off_.total), adam_v_.begin());
}

}  // namespace stylenews
