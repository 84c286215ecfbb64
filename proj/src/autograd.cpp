#include "clseg/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "clseg/error.hpp"

namespace clseg {

std::string_view op_name(OpKind kind) {
    switch (kind) {
        case OpKind::parameter: return "parameter";
        case OpKind::constant: return "constant";
        case OpKind::conv2d: return "conv2d";
        case OpKind::relu: return "relu";
        case OpKind::maxpool2x2: return "maxpool2x2";
        case OpKind::upsample2x2_nearest: return "upsample2x2_nearest";
        case OpKind::add: return "add";
        case OpKind::matmul: return "matmul";
        case OpKind::softmax_channel: return "softmax_channel";
        case OpKind::cross_entropy_loss: return "cross_entropy_loss";
        case OpKind::l2_squared_norm: return "l2_squared_norm";
        case OpKind::scale: return "scale";
        case OpKind::sum: return "sum";
        case OpKind::dropout: return "dropout";
    }
    return "unknown";
}

namespace {

void require_finite(const Tensor& t, OpKind kind) {
    if (!t.all_finite()) {
        throw NumericError(std::string(op_name(kind)) + ": non-finite value in tensor of shape " +
                           shape_string(t.shape()));
    }
}

[[noreturn]] void shape_fail(OpKind kind, const std::string& detail) {
    throw ShapeError(std::string(op_name(kind)) + ": " + detail);
}

void require_rank(const Tensor& t, std::size_t rank, OpKind kind, const char* what) {
    if (t.rank() != rank) {
        shape_fail(kind, std::string(what) + " must be rank " + std::to_string(rank) + ", got " +
                             shape_string(t.shape()));
    }
}

} // namespace

Var Graph::parameter(Tensor& tensor) {
    require_finite(tensor, OpKind::parameter);
    Node node{OpKind::parameter, {}, tensor, {}, {}, nullptr, false};
    node.value.set_requires_grad(false);
    if (grad_enabled_ && tensor.requires_grad()) {
        node.bound = &tensor;
        node.requires_grad = true;
    }
    nodes_.push_back(std::move(node));
    return Var{nodes_.size() - 1};
}

Var Graph::parameter(const Tensor& tensor) {
    require_finite(tensor, OpKind::parameter);
    Node node{OpKind::parameter, {}, tensor, {}, {}, nullptr, false};
    node.value.set_requires_grad(false);
    nodes_.push_back(std::move(node));
    return Var{nodes_.size() - 1};
}

Var Graph::constant(Tensor value) {
    require_finite(value, OpKind::constant);
    value.set_requires_grad(false);
    nodes_.push_back(Node{OpKind::constant, {}, std::move(value), {}, {}, nullptr, false});
    return Var{nodes_.size() - 1};
}

Var Graph::record(OpKind kind, std::vector<Var> inputs, Tensor value, BackwardFn backward) {
    require_finite(value, kind);
    Node node{kind, {}, std::move(value), {}, {}, nullptr, false};
    for (Var in : inputs) {
        if (in.id >= nodes_.size()) throw Error(std::string(op_name(kind)) + ": dangling input");
        node.inputs.push_back(in.id);
        node.requires_grad = node.requires_grad || nodes_[in.id].requires_grad;
    }
    if (node.requires_grad) node.backward = std::move(backward);
    nodes_.push_back(std::move(node));
    return Var{nodes_.size() - 1};
}

std::span<double> Graph::grad_slot(Var v) {
    auto& node = nodes_.at(v.id);
    if (node.grad.empty()) node.grad.assign(node.value.size(), 0.0);
    return node.grad;
}

void Graph::backward(Var loss) {
    if (nodes_.empty()) throw Error("backward: graph is empty");
    if (consumed_) throw Error("backward: graph already consumed");
    auto& root = nodes_.at(loss.id);
    if (root.value.size() != 1) {
        throw ShapeError("backward: loss must be scalar, got shape " + shape_string(root.value.shape()));
    }
    consumed_ = true;
    if (!root.requires_grad) return;
    root.grad.assign(1, 1.0);

    for (std::size_t i = loss.id + 1; i-- > 0;) {
        auto& node = nodes_[i];
        if (!node.requires_grad || node.grad.empty()) continue;
        for (double v : node.grad) {
            if (!std::isfinite(v)) {
                throw NumericError("backward: non-finite gradient at " + std::string(op_name(node.kind)) +
                                   " node " + std::to_string(i));
            }
        }
        if (node.bound != nullptr) {
            auto& target = *node.bound;
            if (!target.has_grad()) target.zero_grad();
            auto dst = target.grad();
            for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += node.grad[k];
        } else if (node.backward) {
            node.backward(*this, Var{i});
        }
    }
    for (auto& node : nodes_) {
        node.backward = nullptr;
        node.grad.clear();
        node.grad.shrink_to_fit();
    }
}

namespace ops {

Var conv2d(Graph& g, Var input, Var kernel, std::optional<Var> bias) {
    const Tensor& x = g.value(input);
    const Tensor& w = g.value(kernel);
    require_rank(x, 4, OpKind::conv2d, "input");
    require_rank(w, 4, OpKind::conv2d, "kernel");
    const std::size_t n_batch = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
    const std::size_t cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    if (w.dim(1) != cin) {
        shape_fail(OpKind::conv2d, "input channels " + std::to_string(cin) + " vs kernel in-channels " +
                                       std::to_string(w.dim(1)));
    }
    if (kh % 2 == 0 || kw % 2 == 0) {
        shape_fail(OpKind::conv2d, "kernel extents must be odd for same padding, got " + shape_string(w.shape()));
    }
    const bool has_bias = bias.has_value();
    if (has_bias) {
        const Tensor& b = g.value(*bias);
        if (b.rank() != 1 || b.dim(0) != cout) {
            shape_fail(OpKind::conv2d, "bias shape " + shape_string(b.shape()) + " vs out-channels " +
                                           std::to_string(cout));
        }
    }

    const long ph = static_cast<long>(kh / 2), pw = static_cast<long>(kw / 2);
    const long H = static_cast<long>(h), W = static_cast<long>(wd);
    const std::size_t plane = h * wd;

    Tensor out({n_batch, cout, h, wd}, 0.0);
    auto od = out.data();
    auto xd = x.data();
    auto wdat = w.data();
    for (std::size_t n = 0; n < n_batch; ++n) {
        for (std::size_t co = 0; co < cout; ++co) {
            double* dst_plane = od.data() + (n * cout + co) * plane;
            if (has_bias) std::fill(dst_plane, dst_plane + plane, g.value(*bias)[co]);
            for (std::size_t ci = 0; ci < cin; ++ci) {
                const double* src_plane = xd.data() + (n * cin + ci) * plane;
                for (std::size_t ky = 0; ky < kh; ++ky) {
                    const long dy = static_cast<long>(ky) - ph;
                    const long y0 = std::max(0L, -dy), y1 = std::min(H, H - dy);
                    for (std::size_t kx = 0; kx < kw; ++kx) {
                        const long dx = static_cast<long>(kx) - pw;
                        const long x0 = std::max(0L, -dx), x1 = std::min(W, W - dx);
                        const double wv = wdat[((co * cin + ci) * kh + ky) * kw + kx];
                        if (wv == 0.0) continue;
                        for (long y = y0; y < y1; ++y) {
                            double* drow = dst_plane + y * W;
                            const double* srow = src_plane + (y + dy) * W + dx;
                            for (long xx = x0; xx < x1; ++xx) drow[xx] += wv * srow[xx];
                        }
                    }
                }
            }
        }
    }

    std::vector<Var> inputs{input, kernel};
    if (has_bias) inputs.push_back(*bias);
    return g.record(OpKind::conv2d, std::move(inputs), std::move(out),
                    [=](Graph& gr, Var self) {
        auto gout = gr.grad(self);
        const auto xv = gr.value(input).data();
        const auto wv_all = gr.value(kernel).data();
        const bool need_x = gr.requires_grad(input);
        const bool need_w = gr.requires_grad(kernel);
        std::span<double> gx, gw;
        if (need_x) gx = gr.grad_slot(input);
        if (need_w) gw = gr.grad_slot(kernel);
        for (std::size_t n = 0; n < n_batch; ++n) {
            for (std::size_t co = 0; co < cout; ++co) {
                const double* go_plane = gout.data() + (n * cout + co) * plane;
                for (std::size_t ci = 0; ci < cin; ++ci) {
                    const std::size_t in_off = (n * cin + ci) * plane;
                    for (std::size_t ky = 0; ky < kh; ++ky) {
                        const long dy = static_cast<long>(ky) - ph;
                        const long y0 = std::max(0L, -dy), y1 = std::min(H, H - dy);
                        for (std::size_t kx = 0; kx < kw; ++kx) {
                            const long dx = static_cast<long>(kx) - pw;
                            const long x0 = std::max(0L, -dx), x1 = std::min(W, W - dx);
                            const std::size_t widx = ((co * cin + ci) * kh + ky) * kw + kx;
                            const double wv = wv_all[widx];
                            double acc = 0.0;
                            for (long y = y0; y < y1; ++y) {
                                const double* grow = go_plane + y * W;
                                const long src = static_cast<long>(in_off) + (y + dy) * W + dx;
                                if (need_w) {
                                    const double* srow = xv.data() + src;
                                    for (long xx = x0; xx < x1; ++xx) acc += grow[xx] * srow[xx];
                                }
                                if (need_x && wv != 0.0) {
                                    double* gxrow = gx.data() + src;
                                    for (long xx = x0; xx < x1; ++xx) gxrow[xx] += wv * grow[xx];
                                }
                            }
                            if (need_w) gw[widx] += acc;
                        }
                    }
                }
            }
        }
        if (has_bias && gr.requires_grad(*bias)) {
            auto gb = gr.grad_slot(*bias);
            for (std::size_t n = 0; n < n_batch; ++n) {
                for (std::size_t co = 0; co < cout; ++co) {
                    const double* go_plane = gout.data() + (n * cout + co) * plane;
                    double acc = 0.0;
                    for (std::size_t k = 0; k < plane; ++k) acc += go_plane[k];
                    gb[co] += acc;
                }
            }
        }
    });
}

Var relu(Graph& g, Var x) {
    Tensor out = g.value(x);
    for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
    return g.record(OpKind::relu, {x}, std::move(out), [x](Graph& gr, Var self) {
        auto gout = gr.grad(self);
        auto xv = gr.value(x).data();
        auto gx = gr.grad_slot(x);
        for (std::size_t i = 0; i < gx.size(); ++i) {
            if (xv[i] > 0.0) gx[i] += gout[i];
        }
    });
}

Var maxpool2x2(Graph& g, Var x) {
    const Tensor& in = g.value(x);
    require_rank(in, 4, OpKind::maxpool2x2, "input");
    const std::size_t n = in.dim(0), c = in.dim(1), h = in.dim(2), w = in.dim(3);
    if (h % 2 != 0 || w % 2 != 0) {
        shape_fail(OpKind::maxpool2x2, "spatial dims must be even, got " + shape_string(in.shape()));
    }
    const std::size_t oh = h / 2, ow = w / 2;
    Tensor out({n, c, oh, ow});
    std::vector<std::size_t> argmax(out.size());
    auto id = in.data();
    for (std::size_t p = 0; p < n * c; ++p) {
        for (std::size_t y = 0; y < oh; ++y) {
            for (std::size_t xx = 0; xx < ow; ++xx) {
                std::size_t best = p * h * w + (2 * y) * w + 2 * xx;
                for (std::size_t a = 0; a < 2; ++a) {
                    for (std::size_t b = 0; b < 2; ++b) {
                        const std::size_t idx = p * h * w + (2 * y + a) * w + 2 * xx + b;
                        if (id[idx] > id[best]) best = idx;
                    }
                }
                const std::size_t o = p * oh * ow + y * ow + xx;
                out[o] = id[best];
                argmax[o] = best;
            }
        }
    }
    return g.record(OpKind::maxpool2x2, {x}, std::move(out),
                    [x, argmax = std::move(argmax)](Graph& gr, Var self) {
        auto gout = gr.grad(self);
        auto gx = gr.grad_slot(x);
        for (std::size_t o = 0; o < gout.size(); ++o) gx[argmax[o]] += gout[o];
    });
}

Var upsample2x2_nearest(Graph& g, Var x) {
    const Tensor& in = g.value(x);
    require_rank(in, 4, OpKind::upsample2x2_nearest, "input");
    const std::size_t n = in.dim(0), c = in.dim(1), h = in.dim(2), w = in.dim(3);
    const std::size_t oh = 2 * h, ow = 2 * w;
    Tensor out({n, c, oh, ow});
    for (std::size_t p = 0; p < n * c; ++p) {
        for (std::size_t y = 0; y < oh; ++y) {
            for (std::size_t xx = 0; xx < ow; ++xx) {
                out[p * oh * ow + y * ow + xx] = in[p * h * w + (y / 2) * w + xx / 2];
            }
        }
    }
    return g.record(OpKind::upsample2x2_nearest, {x}, std::move(out), [=](Graph& gr, Var self) {
        auto gout = gr.grad(self);
        auto gx = gr.grad_slot(x);
        for (std::size_t p = 0; p < n * c; ++p) {
            for (std::size_t y = 0; y < oh; ++y) {
                for (std::size_t xx = 0; xx < ow; ++xx) {
                    gx[p * h * w + (y / 2) * w + xx / 2] += gout[p * oh * ow + y * ow + xx];
                }
            }
        }
    });
}

Var add(Graph& g, Var a, Var b) {
    const Tensor& av = g.value(a);
    const Tensor& bv = g.value(b);
    if (av.shape() != bv.shape()) {
        shape_fail(OpKind::add, "operand shapes " + shape_string(av.shape()) + " and " + shape_string(bv.shape()));
    }
    Tensor out = av;
    auto bd = bv.data();
    auto od = out.data();
    for (std::size_t i = 0; i < od.size(); ++i) od[i] += bd[i];
    return g.record(OpKind::add, {a, b}, std::move(out), [a, b](Graph& gr, Var self) {
        auto gout = gr.grad(self);
        for (Var operand : {a, b}) {
            if (!gr.requires_grad(operand)) continue;
            auto gx = gr.grad_slot(operand);
            for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gout[i];
        }
    });
}

Var matmul(Graph& g, Var a, Var b) {
    const Tensor& av = g.value(a);
    const Tensor& bv = g.value(b);
    require_rank(av, 2, OpKind::matmul, "lhs");
    require_rank(bv, 2, OpKind::matmul, "rhs");
    const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
    if (bv.dim(0) != k) {
        shape_fail(OpKind::matmul, "inner dims " + shape_string(av.shape()) + " x " + shape_string(bv.shape()));
    }
    Tensor out({m, n}, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = av[i * k + p];
            for (std::size_t j = 0; j < n; ++j) out[i * n + j] += aip * bv[p * n + j];
        }
    }
    return g.record(OpKind::matmul, {a, b}, std::move(out), [=](Graph& gr, Var self) {
        auto gout = gr.grad(self);
        const auto& A = gr.value(a);
        const auto& B = gr.value(b);
        if (gr.requires_grad(a)) {
            auto ga = gr.grad_slot(a);
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p)
                    for (std::size_t j = 0; j < n; ++j) ga[i * k + p] += gout[i * n + j] * B[p * n + j];
        }
        if (gr.requires_grad(b)) {
            auto gb = gr.grad_slot(b);
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p)
                    for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += A[i * k + p] * gout[i * n + j];
        }
    });
}

Var softmax_channel(Graph& g, Var logits) {
    const Tensor& in = g.value(logits);
    require_rank(in, 4, OpKind::softmax_channel, "logits");
    const std::size_t n = in.dim(0), c = in.dim(1), plane = in.dim(2) * in.dim(3);
    Tensor out(in.shape());
    for (std::size_t b = 0; b < n; ++b) {
        const std::size_t base = b * c * plane;
        for (std::size_t p = 0; p < plane; ++p) {
            double mx = in[base + p];
            for (std::size_t k = 1; k < c; ++k) mx = std::max(mx, in[base + k * plane + p]);
            double total = 0.0;
            for (std::size_t k = 0; k < c; ++k) {
                const double e = std::exp(in[base + k * plane + p] - mx);
                out[base + k * plane + p] = e;
                total += e;
            }
            for (std::size_t k = 0; k < c; ++k) out[base + k * plane + p] /= total;
        }
    }
    return g.record(OpKind::softmax_channel, {logits}, std::move(out), [=](Graph& gr, Var self) {
        auto gout = gr.grad(self);
        const auto& prob = gr.value(self);
        auto gx = gr.grad_slot(logits);
        for (std::size_t b = 0; b < n; ++b) {
            const std::size_t base = b * c * plane;
            for (std::size_t p = 0; p < plane; ++p) {
                double dot = 0.0;
                for (std::size_t k = 0; k < c; ++k) dot += gout[base + k * plane + p] * prob[base + k * plane + p];
                for (std::size_t k = 0; k < c; ++k) {
                    const std::size_t idx = base + k * plane + p;
                    gx[idx] += prob[idx] * (gout[idx] - dot);
                }
            }
        }
    });
}

Var cross_entropy_loss(Graph& g, Var probs, std::span<const int> labels) {
    const Tensor& p = g.value(probs);
    require_rank(p, 4, OpKind::cross_entropy_loss, "probs");
    const std::size_t n = p.dim(0), c = p.dim(1), plane = p.dim(2) * p.dim(3);
    if (labels.size() != n * plane) {
        shape_fail(OpKind::cross_entropy_loss, "expected " + std::to_string(n * plane) + " labels for probs " +
                                                   shape_string(p.shape()) + ", got " + std::to_string(labels.size()));
    }
    const double inv_count = 1.0 / static_cast<double>(n * plane);
    std::vector<std::size_t> picked(labels.size());
    double loss = 0.0;
    for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t q = 0; q < plane; ++q) {
            const int label = labels[b * plane + q];
            if (label < 0 || static_cast<std::size_t>(label) >= c) {
                shape_fail(OpKind::cross_entropy_loss, "label " + std::to_string(label) + " outside [0," +
                                                           std::to_string(c) + ")");
            }
            const std::size_t idx = (b * c + static_cast<std::size_t>(label)) * plane + q;
            picked[b * plane + q] = idx;
            loss -= std::log(p[idx]);
        }
    }
    loss *= inv_count;
    return g.record(OpKind::cross_entropy_loss, {probs}, Tensor({1}, loss),
                    [probs, inv_count, picked = std::move(picked)](Graph& gr, Var self) {
        const double up = gr.grad(self)[0];
        const auto& pv = gr.value(probs);
        auto gp = gr.grad_slot(probs);
        for (std::size_t idx : picked) gp[idx] -= up * inv_count / pv[idx];
    });
}

Var l2_squared_norm(Graph& g, Var x) {
    double acc = 0.0;
    for (double v : g.value(x).data()) acc += v * v;
    return g.record(OpKind::l2_squared_norm, {x}, Tensor({1}, acc), [x](Graph& gr, Var self) {
        const double up = gr.grad(self)[0];
        auto xv = gr.value(x).data();
        auto gx = gr.grad_slot(x);
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += 2.0 * xv[i] * up;
    });
}

Var scale(Graph& g, Var x, double factor) {
    Tensor out = g.value(x);
    for (double& v : out.data()) v *= factor;
    return g.record(OpKind::scale, {x}, std::move(out), [x, factor](Graph& gr, Var self) {
        auto gout = gr.grad(self);
        auto gx = gr.grad_slot(x);
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += factor * gout[i];
    });
}

Var sum(Graph& g, Var x) {
    double acc = 0.0;
    for (double v : g.value(x).data()) acc += v;
    return g.record(OpKind::sum, {x}, Tensor({1}, acc), [x](Graph& gr, Var self) {
        const double up = gr.grad(self)[0];
        auto gx = gr.grad_slot(x);
        for (double& v : gx) v += up;
    });
}

Var dropout(Graph& g, Var x, double rate, std::mt19937_64& rng) {
    if (rate <= 0.0) return x;
    if (rate >= 1.0) throw Error("dropout: rate must be in [0,1), got " + std::to_string(rate));
    const double keep_scale = 1.0 / (1.0 - rate);
    std::bernoulli_distribution keep(1.0 - rate);
    Tensor out = g.value(x);
    std::vector<double> mask(out.size());
    for (std::size_t i = 0; i < mask.size(); ++i) {
        mask[i] = keep(rng) ? keep_scale : 0.0;
        out[i] *= mask[i];
    }
    return g.record(OpKind::dropout, {x}, std::move(out), [x, mask = std::move(mask)](Graph& gr, Var self) {
        auto gout = gr.grad(self);
        auto gx = gr.grad_slot(x);
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += mask[i] * gout[i];
    });
}

} // namespace ops
} // namespace clseg
