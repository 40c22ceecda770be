#include "shape2field/graph.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <unordered_set>

namespace s2f {

namespace {

constexpr double kMaskedScore = std::numeric_limits<double>::lowest();
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

// C[m x n] += A[m x k] * B[k x n]
void mm_acc(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
    for (int64_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (int64_t p = 0; p < k; ++p) {
            const double av = arow[p];
            const double* brow = b + p * n;
            for (int64_t j = 0; j < n; ++j) {
                crow[j] += av * brow[j];
            }
        }
    }
}

// C[k x n] += A^T * G  with A[m x k], G[m x n]
void mm_at_acc(const double* a, const double* g, double* c, int64_t m, int64_t k, int64_t n) {
    for (int64_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        const double* grow = g + i * n;
        for (int64_t p = 0; p < k; ++p) {
            const double av = arow[p];
            double* crow = c + p * n;
            for (int64_t j = 0; j < n; ++j) {
                crow[j] += av * grow[j];
            }
        }
    }
}

// C[m x k] += G * B^T  with G[m x n], B[k x n]
void mm_bt_acc(const double* g, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
    for (int64_t i = 0; i < m; ++i) {
        const double* grow = g + i * n;
        double* crow = c + i * k;
        for (int64_t p = 0; p < k; ++p) {
            const double* brow = b + p * n;
            double dot = 0.0;
            for (int64_t j = 0; j < n; ++j) {
                dot += grow[j] * brow[j];
            }
            crow[p] += dot;
        }
    }
}

Value make_node(Tensor value, std::vector<Value> parents,
                std::function<void(const Node&, const Tensor&, GradTable&)> backprop) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->parents = std::move(parents);
    n->backprop = std::move(backprop);
    return n;
}

Tensor& grad_of(GradTable& table, const Node* node) {
    auto it = table.find(node);
    if (it == table.end()) {
        it = table.emplace(node, Tensor(node->value.shape)).first;
    }
    return it->second;
}

// Branch-free exp for non-positive arguments (softmax operates on shifted
// scores, so x <= 0 always). Cody-Waite reduction plus a degree-13 Taylor
// polynomial, about 1 ulp over the useful range; anything below -708
// flushes to exactly 0, which is what keeps masked keys silent. No libm
// or int64 conversions, so the softmax loop auto-vectorizes on AVX2: the
// round-to-nearest and the 2^k reconstruction both ride on the magic
// constant 1.5 * 2^52.
inline double exp_nonpos(double x) {
    constexpr double inv_ln2 = 1.4426950408889634074;
    constexpr double ln2_hi = 6.93147180369123816490e-01;
    constexpr double ln2_lo = 1.90821492927058770002e-10;
    constexpr double round_magic = 6755399441055744.0;
    const double xc = std::max(x, -709.0);
    const double t = xc * inv_ln2 + round_magic; // k sits in the low mantissa bits
    const double k = t - round_magic;
    const double r = (xc - k * ln2_hi) - k * ln2_lo;
    double p = 1.0 / 6227020800.0; // 1/13!
    p = p * r + 1.0 / 479001600.0;
    p = p * r + 1.0 / 39916800.0;
    p = p * r + 1.0 / 3628800.0;
    p = p * r + 1.0 / 362880.0;
    p = p * r + 1.0 / 40320.0;
    p = p * r + 1.0 / 5040.0;
    p = p * r + 1.0 / 720.0;
    p = p * r + 1.0 / 120.0;
    p = p * r + 1.0 / 24.0;
    p = p * r + 1.0 / 6.0;
    p = p * r + 0.5;
    p = p * r + 1.0;
    p = p * r + 1.0;
    const uint64_t scale_bits =
        std::bit_cast<uint64_t>(1.0) + (std::bit_cast<uint64_t>(t) << 52);
    return x < -708.0 ? 0.0 : p * std::bit_cast<double>(scale_bits);
}

void softmax_row(double* row, int64_t n) {
    double mx = row[0];
    for (int64_t j = 1; j < n; ++j) {
        mx = std::max(mx, row[j]);
    }
    double denom = 0.0;
    for (int64_t j = 0; j < n; ++j) {
        const double e = exp_nonpos(row[j] - mx);
        row[j] = e;
        denom += e;
    }
    const double inv = 1.0 / denom;
    for (int64_t j = 0; j < n; ++j) {
        row[j] *= inv;
    }
}

// ds = s .* (g - sum(g .* s)) per row, accumulated into ds
void softmax_backward_row(const double* s, const double* g, double* ds, int64_t n) {
    double dot = 0.0;
    for (int64_t j = 0; j < n; ++j) {
        dot += s[j] * g[j];
    }
    for (int64_t j = 0; j < n; ++j) {
        ds[j] += s[j] * (g[j] - dot);
    }
}

} // namespace

void Node::zero_grad() {
    grad = Tensor();
}

Value constant(Tensor v) {
    return make_node(std::move(v), {}, nullptr);
}

Value leaf(Tensor v) {
    auto n = make_node(std::move(v), {}, nullptr);
    n->requires_grad = true;
    return n;
}

Value matmul(const Value& a, const Value& b) {
    check(a->value.rank() == 2 && b->value.rank() == 2, "matmul expects rank-2 operands");
    const int64_t m = a->value.dim(0), k = a->value.dim(1), n = b->value.dim(1);
    check(b->value.dim(0) == k, "matmul inner dimensions differ: " + shape_str(a->value.shape) +
                                    " vs " + shape_str(b->value.shape));
    Tensor out({m, n});
    mm_acc(a->value.data.data(), b->value.data.data(), out.data.data(), m, k, n);
    return make_node(std::move(out), {a, b},
                     [m, k, n](const Node& self, const Tensor& g, GradTable& table) {
                         const Node* pa = self.parents[0].get();
                         const Node* pb = self.parents[1].get();
                         mm_bt_acc(g.data.data(), pb->value.data.data(),
                                   grad_of(table, pa).data.data(), m, k, n);
                         mm_at_acc(pa->value.data.data(), g.data.data(),
                                   grad_of(table, pb).data.data(), m, k, n);
                     });
}

Value linear(const Value& x, const Value& w, const Value& b) {
    check(w->value.rank() == 2 && b->value.rank() == 1, "linear expects w [in x out], b [out]");
    const int64_t in = w->value.dim(0), out_dim = w->value.dim(1);
    check(b->value.dim(0) == out_dim, "linear bias size mismatch");
    check(x->value.rank() >= 1 && x->value.dim(-1) == in,
          "linear input channel mismatch: " + shape_str(x->value.shape) + " vs w " +
              shape_str(w->value.shape));
    const int64_t rows = x->value.rows_flat();

    std::vector<int64_t> out_shape = x->value.shape;
    out_shape.back() = out_dim;
    Tensor out(out_shape);
    for (int64_t i = 0; i < rows; ++i) {
        double* orow = out.data.data() + i * out_dim;
        for (int64_t j = 0; j < out_dim; ++j) {
            orow[j] = b->value[j];
        }
    }
    mm_acc(x->value.data.data(), w->value.data.data(), out.data.data(), rows, in, out_dim);

    return make_node(std::move(out), {x, w, b},
                     [rows, in, out_dim](const Node& self, const Tensor& g, GradTable& table) {
                         const Node* px = self.parents[0].get();
                         const Node* pw = self.parents[1].get();
                         const Node* pb = self.parents[2].get();
                         mm_bt_acc(g.data.data(), pw->value.data.data(),
                                   grad_of(table, px).data.data(), rows, in, out_dim);
                         mm_at_acc(px->value.data.data(), g.data.data(),
                                   grad_of(table, pw).data.data(), rows, in, out_dim);
                         Tensor& gb = grad_of(table, pb);
                         for (int64_t i = 0; i < rows; ++i) {
                             const double* grow = g.data.data() + i * out_dim;
                             for (int64_t j = 0; j < out_dim; ++j) {
                                 gb[j] += grow[j];
                             }
                         }
                     });
}

Value add(const Value& a, const Value& b) {
    check(a->value.same_shape(b->value), "add shape mismatch: " + shape_str(a->value.shape) +
                                             " vs " + shape_str(b->value.shape));
    Tensor out = a->value;
    for (size_t i = 0; i < out.data.size(); ++i) {
        out.data[i] += b->value.data[i];
    }
    return make_node(std::move(out), {a, b},
                     [](const Node& self, const Tensor& g, GradTable& table) {
                         for (int p = 0; p < 2; ++p) {
                             Tensor& gp = grad_of(table, self.parents[p].get());
                             for (size_t i = 0; i < g.data.size(); ++i) {
                                 gp.data[i] += g.data[i];
                             }
                         }
                     });
}

Value sub(const Value& a, const Value& b) {
    check(a->value.same_shape(b->value), "sub shape mismatch");
    Tensor out = a->value;
    for (size_t i = 0; i < out.data.size(); ++i) {
        out.data[i] -= b->value.data[i];
    }
    return make_node(std::move(out), {a, b},
                     [](const Node& self, const Tensor& g, GradTable& table) {
                         Tensor& ga = grad_of(table, self.parents[0].get());
                         Tensor& gb = grad_of(table, self.parents[1].get());
                         for (size_t i = 0; i < g.data.size(); ++i) {
                             ga.data[i] += g.data[i];
                             gb.data[i] -= g.data[i];
                         }
                     });
}

Value mul(const Value& a, const Value& b) {
    check(a->value.same_shape(b->value), "mul shape mismatch");
    Tensor out = a->value;
    for (size_t i = 0; i < out.data.size(); ++i) {
        out.data[i] *= b->value.data[i];
    }
    return make_node(std::move(out), {a, b},
                     [](const Node& self, const Tensor& g, GradTable& table) {
                         const Node* pa = self.parents[0].get();
                         const Node* pb = self.parents[1].get();
                         Tensor& ga = grad_of(table, pa);
                         Tensor& gb = grad_of(table, pb);
                         for (size_t i = 0; i < g.data.size(); ++i) {
                             ga.data[i] += g.data[i] * pb->value.data[i];
                             gb.data[i] += g.data[i] * pa->value.data[i];
                         }
                     });
}

Value scale(const Value& a, double s) {
    Tensor out = a->value;
    for (double& v : out.data) {
        v *= s;
    }
    return make_node(std::move(out), {a},
                     [s](const Node& self, const Tensor& g, GradTable& table) {
                         Tensor& ga = grad_of(table, self.parents[0].get());
                         for (size_t i = 0; i < g.data.size(); ++i) {
                             ga.data[i] += s * g.data[i];
                         }
                     });
}

Value gelu(const Value& x) {
    Tensor out = x->value;
    for (double& v : out.data) {
        v = 0.5 * v * (1.0 + std::erf(v * kInvSqrt2));
    }
    return make_node(std::move(out), {x},
                     [](const Node& self, const Tensor& g, GradTable& table) {
                         const Node* px = self.parents[0].get();
                         Tensor& gx = grad_of(table, px);
                         for (size_t i = 0; i < g.data.size(); ++i) {
                             const double v = px->value.data[i];
                             const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
                             const double pdf = kInvSqrt2Pi * exp_nonpos(-0.5 * v * v);
                             gx.data[i] += g.data[i] * (cdf + v * pdf);
                         }
                     });
}

Value log_elem(const Value& x) {
    Tensor out = x->value;
    for (double& v : out.data) {
        v = std::log(v);
    }
    return make_node(std::move(out), {x},
                     [](const Node& self, const Tensor& g, GradTable& table) {
                         const Node* px = self.parents[0].get();
                         Tensor& gx = grad_of(table, px);
                         for (size_t i = 0; i < g.data.size(); ++i) {
                             gx.data[i] += g.data[i] / px->value.data[i];
                         }
                     });
}

Value softmax_last(const Value& x) {
    check(x->value.rank() >= 1, "softmax_last on rank-0 tensor");
    const int64_t n = x->value.dim(-1);
    const int64_t rows = x->value.rows_flat();
    Tensor out = x->value;
    for (int64_t i = 0; i < rows; ++i) {
        softmax_row(out.data.data() + i * n, n);
    }
    Tensor saved = out;
    return make_node(std::move(out), {x},
                     [n, rows, saved = std::move(saved)](const Node& self, const Tensor& g,
                                                         GradTable& table) {
                         Tensor& gx = grad_of(table, self.parents[0].get());
                         for (int64_t i = 0; i < rows; ++i) {
                             softmax_backward_row(saved.data.data() + i * n,
                                                  g.data.data() + i * n,
                                                  gx.data.data() + i * n, n);
                         }
                     });
}

Value layer_norm(const Value& x, const Value& gain, const Value& bias, double eps) {
    check(eps > 0.0, "layer_norm eps must be positive");
    const int64_t d = x->value.dim(-1);
    check(gain->value.rank() == 1 && gain->value.dim(0) == d, "layer_norm gain shape mismatch");
    check(bias->value.rank() == 1 && bias->value.dim(0) == d, "layer_norm bias shape mismatch");
    const int64_t rows = x->value.rows_flat();

    Tensor out(x->value.shape);
    for (int64_t i = 0; i < rows; ++i) {
        const double* xr = x->value.data.data() + i * d;
        double* orow = out.data.data() + i * d;
        double mean = 0.0;
        for (int64_t j = 0; j < d; ++j) {
            mean += xr[j];
        }
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (int64_t j = 0; j < d; ++j) {
            const double c = xr[j] - mean;
            var += c * c;
        }
        var /= static_cast<double>(d);
        const double inv = 1.0 / std::sqrt(var + eps);
        for (int64_t j = 0; j < d; ++j) {
            orow[j] = (xr[j] - mean) * inv * gain->value[j] + bias->value[j];
        }
    }

    return make_node(
        std::move(out), {x, gain, bias},
        [d, rows, eps](const Node& self, const Tensor& g, GradTable& table) {
            const Node* px = self.parents[0].get();
            const Node* pgain = self.parents[1].get();
            const Node* pbias = self.parents[2].get();
            Tensor& gx = grad_of(table, px);
            Tensor& ggain = grad_of(table, pgain);
            Tensor& gbias = grad_of(table, pbias);
            const double dn = static_cast<double>(d);
            for (int64_t i = 0; i < rows; ++i) {
                const double* xr = px->value.data.data() + i * d;
                const double* gr = g.data.data() + i * d;
                double mean = 0.0;
                for (int64_t j = 0; j < d; ++j) {
                    mean += xr[j];
                }
                mean /= dn;
                double var = 0.0;
                for (int64_t j = 0; j < d; ++j) {
                    const double c = xr[j] - mean;
                    var += c * c;
                }
                var /= dn;
                const double inv = 1.0 / std::sqrt(var + eps);

                double dvar = 0.0, dmean = 0.0, csum = 0.0;
                for (int64_t j = 0; j < d; ++j) {
                    const double c = xr[j] - mean;
                    const double dxhat = gr[j] * pgain->value[j];
                    dvar += dxhat * c;
                    dmean -= dxhat;
                    csum += c;
                    ggain[j] += gr[j] * c * inv;
                    gbias[j] += gr[j];
                }
                dvar *= -0.5 * inv * inv * inv;
                dmean = dmean * inv + dvar * (-2.0 / dn) * csum;
                double* gxr = gx.data.data() + i * d;
                for (int64_t j = 0; j < d; ++j) {
                    const double c = xr[j] - mean;
                    const double dxhat = gr[j] * pgain->value[j];
                    gxr[j] += dxhat * inv + dvar * 2.0 * c / dn + dmean / dn;
                }
            }
        });
}

Value reshape(const Value& x, std::vector<int64_t> shape) {
    check(numel_of(shape) == x->value.numel(),
          "reshape numel mismatch: " + shape_str(x->value.shape) + " -> " + shape_str(shape));
    Tensor out;
    out.shape = std::move(shape);
    out.data = x->value.data;
    return make_node(std::move(out), {x},
                     [](const Node& self, const Tensor& g, GradTable& table) {
                         Tensor& gx = grad_of(table, self.parents[0].get());
                         for (size_t i = 0; i < g.data.size(); ++i) {
                             gx.data[i] += g.data[i];
                         }
                     });
}

Value concat_last(const Value& a, const Value& b) {
    check(a->value.rank() == b->value.rank() && a->value.rank() >= 1, "concat rank mismatch");
    for (int i = 0; i + 1 < a->value.rank(); ++i) {
        check(a->value.dim(i) == b->value.dim(i), "concat leading dims differ");
    }
    const int64_t ca = a->value.dim(-1), cb = b->value.dim(-1);
    const int64_t rows = a->value.rows_flat();
    std::vector<int64_t> shape = a->value.shape;
    shape.back() = ca + cb;
    Tensor out(shape);
    for (int64_t i = 0; i < rows; ++i) {
        double* orow = out.data.data() + i * (ca + cb);
        const double* ar = a->value.data.data() + i * ca;
        const double* br = b->value.data.data() + i * cb;
        std::copy(ar, ar + ca, orow);
        std::copy(br, br + cb, orow + ca);
    }
    return make_node(std::move(out), {a, b},
                     [ca, cb, rows](const Node& self, const Tensor& g, GradTable& table) {
                         Tensor& ga = grad_of(table, self.parents[0].get());
                         Tensor& gb = grad_of(table, self.parents[1].get());
                         for (int64_t i = 0; i < rows; ++i) {
                             const double* grow = g.data.data() + i * (ca + cb);
                             for (int64_t j = 0; j < ca; ++j) {
                                 ga.data[i * ca + j] += grow[j];
                             }
                             for (int64_t j = 0; j < cb; ++j) {
                                 gb.data[i * cb + j] += grow[ca + j];
                             }
                         }
                     });
}

Value gather_rows(const Value& x, std::vector<int64_t> idx) {
    check(x->value.rank() == 2, "gather_rows expects a rank-2 source");
    const int64_t n = x->value.dim(0), c = x->value.dim(1);
    for (int64_t i : idx) {
        check(i >= 0 && i < n, "gather_rows index out of range");
    }
    const int64_t m = static_cast<int64_t>(idx.size());
    Tensor out({m, c});
    for (int64_t i = 0; i < m; ++i) {
        const double* src = x->value.data.data() + idx[static_cast<size_t>(i)] * c;
        std::copy(src, src + c, out.data.data() + i * c);
    }
    return make_node(std::move(out), {x},
                     [c, idx = std::move(idx)](const Node& self, const Tensor& g,
                                               GradTable& table) {
                         Tensor& gx = grad_of(table, self.parents[0].get());
                         for (size_t i = 0; i < idx.size(); ++i) {
                             const double* grow = g.data.data() + static_cast<int64_t>(i) * c;
                             double* dst = gx.data.data() + idx[i] * c;
                             for (int64_t j = 0; j < c; ++j) {
                                 dst[j] += grow[j];
                             }
                         }
                     });
}

Value max_over_middle(const Value& x) {
    check(x->value.rank() == 3, "max_over_middle expects [G x P x C]");
    const int64_t gcount = x->value.dim(0), p = x->value.dim(1), c = x->value.dim(2);
    check(p >= 1, "max_over_middle needs at least one element per group");
    Tensor out({gcount, c});
    std::vector<int64_t> argmax(static_cast<size_t>(gcount * c));
    for (int64_t gi = 0; gi < gcount; ++gi) {
        for (int64_t j = 0; j < c; ++j) {
            double best = x->value[gi * p * c + j];
            int64_t best_p = 0;
            for (int64_t pi = 1; pi < p; ++pi) {
                const double v = x->value[(gi * p + pi) * c + j];
                if (v > best) {
                    best = v;
                    best_p = pi;
                }
            }
            out[gi * c + j] = best;
            argmax[static_cast<size_t>(gi * c + j)] = best_p;
        }
    }
    return make_node(std::move(out), {x},
                     [gcount, p, c, argmax = std::move(argmax)](const Node& self, const Tensor& g,
                                                                GradTable& table) {
                         Tensor& gx = grad_of(table, self.parents[0].get());
                         for (int64_t gi = 0; gi < gcount; ++gi) {
                             for (int64_t j = 0; j < c; ++j) {
                                 const int64_t pi = argmax[static_cast<size_t>(gi * c + j)];
                                 gx[(gi * p + pi) * c + j] += g[gi * c + j];
                             }
                         }
                     });
}

Value broadcast_rows(const Value& row, int64_t n) {
    check(row->value.rank() == 1, "broadcast_rows expects a rank-1 input");
    check(n >= 1, "broadcast_rows needs n >= 1");
    const int64_t c = row->value.dim(0);
    Tensor out({n, c});
    for (int64_t i = 0; i < n; ++i) {
        std::copy(row->value.data.begin(), row->value.data.end(), out.data.begin() + i * c);
    }
    return make_node(std::move(out), {row},
                     [n, c](const Node& self, const Tensor& g, GradTable& table) {
                         Tensor& gr = grad_of(table, self.parents[0].get());
                         for (int64_t i = 0; i < n; ++i) {
                             for (int64_t j = 0; j < c; ++j) {
                                 gr[j] += g[i * c + j];
                             }
                         }
                     });
}

Value sum_all(const Value& x) {
    double s = 0.0;
    for (double v : x->value.data) {
        s += v;
    }
    return make_node(Tensor::scalar(s), {x},
                     [](const Node& self, const Tensor& g, GradTable& table) {
                         Tensor& gx = grad_of(table, self.parents[0].get());
                         for (double& v : gx.data) {
                             v += g[0];
                         }
                     });
}

Value split_heads(const Value& x, int64_t heads) {
    check(x->value.rank() == 2, "split_heads expects [N x d]");
    const int64_t n = x->value.dim(0), d = x->value.dim(1);
    check(heads >= 1 && d % heads == 0, "embedding dim not divisible by head count");
    const int64_t dh = d / heads;
    Tensor out({heads, n, dh});
    for (int64_t h = 0; h < heads; ++h) {
        for (int64_t i = 0; i < n; ++i) {
            const double* src = x->value.data.data() + i * d + h * dh;
            std::copy(src, src + dh, out.data.data() + (h * n + i) * dh);
        }
    }
    return make_node(std::move(out), {x},
                     [heads, n, d, dh](const Node& self, const Tensor& g, GradTable& table) {
                         Tensor& gx = grad_of(table, self.parents[0].get());
                         for (int64_t h = 0; h < heads; ++h) {
                             for (int64_t i = 0; i < n; ++i) {
                                 const double* grow = g.data.data() + (h * n + i) * dh;
                                 double* dst = gx.data.data() + i * d + h * dh;
                                 for (int64_t j = 0; j < dh; ++j) {
                                     dst[j] += grow[j];
                                 }
                             }
                         }
                     });
}

Value merge_heads(const Value& x) {
    check(x->value.rank() == 3, "merge_heads expects [h x N x dh]");
    const int64_t heads = x->value.dim(0), n = x->value.dim(1), dh = x->value.dim(2);
    const int64_t d = heads * dh;
    Tensor out({n, d});
    for (int64_t h = 0; h < heads; ++h) {
        for (int64_t i = 0; i < n; ++i) {
            const double* src = x->value.data.data() + (h * n + i) * dh;
            std::copy(src, src + dh, out.data.data() + i * d + h * dh);
        }
    }
    return make_node(std::move(out), {x},
                     [heads, n, d, dh](const Node& self, const Tensor& g, GradTable& table) {
                         Tensor& gx = grad_of(table, self.parents[0].get());
                         for (int64_t h = 0; h < heads; ++h) {
                             for (int64_t i = 0; i < n; ++i) {
                                 const double* grow = g.data.data() + i * d + h * dh;
                                 double* dst = gx.data.data() + (h * n + i) * dh;
                                 for (int64_t j = 0; j < dh; ++j) {
                                     dst[j] += grow[j];
                                 }
                             }
                         }
                     });
}

Value scaled_dot_attention(const Value& q, const Value& k, const Value& v,
                           const std::vector<uint8_t>* key_mask) {
    check(q->value.rank() == 3 && k->value.rank() == 3 && v->value.rank() == 3,
          "attention expects rank-3 [h x N x dh] operands");
    const int64_t heads = q->value.dim(0), nq = q->value.dim(1), dh = q->value.dim(2);
    const int64_t nk = k->value.dim(1);
    check(dh >= 1, "head dimension must be >= 1");
    check(k->value.dim(0) == heads && v->value.dim(0) == heads, "attention head count mismatch");
    check(k->value.dim(2) == dh, "key head dim mismatch");
    check(v->value.dim(1) == nk && v->value.dim(2) == dh, "value shape mismatch");

    std::vector<uint8_t> mask;
    if (key_mask != nullptr) {
        check(static_cast<int64_t>(key_mask->size()) == nk, "key mask length mismatch");
        mask = *key_mask;
        bool any = false;
        for (uint8_t m : mask) {
            any = any || (m != 0);
        }
        check(any, "no attendable keys");
    }

    const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dh));

    // Head slices are transposed to [dh x nk] scratch so every inner loop
    // runs along the key axis, which is the long one.
    auto transpose_head = [nk, dh](const double* src, std::vector<double>& dst) {
        for (int64_t j = 0; j < nk; ++j) {
            for (int64_t t = 0; t < dh; ++t) {
                dst[static_cast<size_t>(t * nk + j)] = src[j * dh + t];
            }
        }
    };

    // weights[h x nq x nk], kept for backward
    Tensor weights({heads, nq, nk});
    Tensor out({heads, nq, dh});
    std::vector<double> kt(static_cast<size_t>(dh * nk)), vt(static_cast<size_t>(dh * nk));
    for (int64_t h = 0; h < heads; ++h) {
        transpose_head(k->value.data.data() + h * nk * dh, kt);
        transpose_head(v->value.data.data() + h * nk * dh, vt);
        for (int64_t i = 0; i < nq; ++i) {
            const double* qrow = q->value.data.data() + (h * nq + i) * dh;
            double* wrow = weights.data.data() + (h * nq + i) * nk;
            for (int64_t j = 0; j < nk; ++j) {
                wrow[j] = 0.0;
            }
            for (int64_t t = 0; t < dh; ++t) {
                const double qv = qrow[t] * inv_scale;
                const double* ktrow = kt.data() + t * nk;
                for (int64_t j = 0; j < nk; ++j) {
                    wrow[j] += qv * ktrow[j];
                }
            }
            if (!mask.empty()) {
                for (int64_t j = 0; j < nk; ++j) {
                    if (mask[static_cast<size_t>(j)] == 0) {
                        wrow[j] = kMaskedScore;
                    }
                }
            }
            softmax_row(wrow, nk);
            double* orow = out.data.data() + (h * nq + i) * dh;
            for (int64_t t = 0; t < dh; ++t) {
                const double* vtrow = vt.data() + t * nk;
                double acc = 0.0;
                for (int64_t j = 0; j < nk; ++j) {
                    acc += wrow[j] * vtrow[j];
                }
                orow[t] = acc;
            }
        }
    }

    return make_node(
        std::move(out), {q, k, v},
        [heads, nq, nk, dh, inv_scale, transpose_head, weights = std::move(weights)](
            const Node& self, const Tensor& g, GradTable& table) {
            const Node* pq = self.parents[0].get();
            const Node* pk = self.parents[1].get();
            const Node* pv = self.parents[2].get();
            Tensor& gq = grad_of(table, pq);
            Tensor& gk = grad_of(table, pk);
            Tensor& gv = grad_of(table, pv);
            std::vector<double> kt(static_cast<size_t>(dh * nk)),
                vt(static_cast<size_t>(dh * nk));
            std::vector<double> gkt(static_cast<size_t>(dh * nk)),
                gvt(static_cast<size_t>(dh * nk));
            std::vector<double> dw(static_cast<size_t>(nk)), ds(static_cast<size_t>(nk));
            for (int64_t h = 0; h < heads; ++h) {
                transpose_head(pk->value.data.data() + h * nk * dh, kt);
                transpose_head(pv->value.data.data() + h * nk * dh, vt);
                std::fill(gkt.begin(), gkt.end(), 0.0);
                std::fill(gvt.begin(), gvt.end(), 0.0);
                for (int64_t i = 0; i < nq; ++i) {
                    const double* grow = g.data.data() + (h * nq + i) * dh;
                    const double* wrow = weights.data.data() + (h * nq + i) * nk;
                    const double* qrow = pq->value.data.data() + (h * nq + i) * dh;
                    double* gqrow = gq.data.data() + (h * nq + i) * dh;
                    // dW = g . v^T ; dV^T += g^T . w
                    std::fill(dw.begin(), dw.end(), 0.0);
                    for (int64_t t = 0; t < dh; ++t) {
                        const double gv_t = grow[t];
                        const double* vtrow = vt.data() + t * nk;
                        double* gvtrow = gvt.data() + t * nk;
                        for (int64_t j = 0; j < nk; ++j) {
                            dw[static_cast<size_t>(j)] += gv_t * vtrow[j];
                            gvtrow[j] += gv_t * wrow[j];
                        }
                    }
                    // through the softmax; masked columns have w == 0 so ds == 0 there
                    std::fill(ds.begin(), ds.end(), 0.0);
                    softmax_backward_row(wrow, dw.data(), ds.data(), nk);
                    // dq = ds . k * scale ; dk^t += q^t . ds * scale
                    for (int64_t t = 0; t < dh; ++t) {
                        const double* ktrow = kt.data() + t * nk;
                        double* gktrow = gkt.data() + t * nk;
                        const double qv = qrow[t] * inv_scale;
                        double acc = 0.0;
                        for (int64_t j = 0; j < nk; ++j) {
                            acc += ds[static_cast<size_t>(j)] * ktrow[j];
                            gktrow[j] += qv * ds[static_cast<size_t>(j)];
                        }
                        gqrow[t] += acc * inv_scale;
                    }
                }
                // fold the transposed gradients back into [nk x dh] layout
                double* gkh = gk.data.data() + h * nk * dh;
                double* gvh = gv.data.data() + h * nk * dh;
                for (int64_t j = 0; j < nk; ++j) {
                    for (int64_t t = 0; t < dh; ++t) {
                        gkh[j * dh + t] += gkt[static_cast<size_t>(t * nk + j)];
                        gvh[j * dh + t] += gvt[static_cast<size_t>(t * nk + j)];
                    }
                }
            }
        });
}

GradTable backward_table(const Value& root) {
    check(root != nullptr, "backward on null value");
    check(root->value.is_scalar(), "backward requires a scalar root, got " +
                                       shape_str(root->value.shape));

    // reverse DFS post-order = topological order (consumers before producers)
    std::vector<const Node*> order;
    std::unordered_set<const Node*> visited;
    std::vector<std::pair<const Node*, size_t>> stack;
    stack.emplace_back(root.get(), 0);
    visited.insert(root.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            const Node* parent = node->parents[next].get();
            ++next;
            if (visited.insert(parent).second) {
                stack.emplace_back(parent, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    std::reverse(order.begin(), order.end());

    GradTable table;
    table.emplace(root.get(), Tensor::scalar(1.0));
    for (const Node* node : order) {
        if (!node->backprop) {
            continue;
        }
        auto it = table.find(node);
        if (it == table.end()) {
            continue; // no gradient flowed here
        }
        node->backprop(*node, it->second, table);
    }
    return table;
}

void backward(const Value& root) {
    GradTable table = backward_table(root);
    for (auto& [node, grad] : table) {
        if (!node->requires_grad) {
            continue;
        }
        Node* n = const_cast<Node*>(node);
        if (n->grad.data.empty()) {
            n->grad = Tensor(n->value.shape);
        }
        for (size_t i = 0; i < grad.data.size(); ++i) {
            n->grad.data[i] += grad.data[i];
        }
    }
}

} // namespace s2f
