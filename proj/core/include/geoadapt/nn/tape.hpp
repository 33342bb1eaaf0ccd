#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "geoadapt/nn/tensor.hpp"

namespace geoadapt::nn {

/// Handle into a tape. Only valid for the tape that produced it.
struct Var {
    size_t i = static_cast<size_t>(-1);
};

/// Reverse-mode automatic differentiation over a dynamically built graph.
/// Every operation records its inputs and a backward closure; backward()
/// walks nodes in reverse creation order, which is a valid topological
/// order because inputs always precede results.
template <typename T>
class Tape {
public:
    Var input(Tensor<T> value) { return push(std::move(value), false, {}, nullptr); }

    Var param(Tensor<T> value, std::string name = {}) {
        Var v = push(std::move(value), true, {}, nullptr);
        if (!name.empty()) named_.emplace_back(std::move(name), v.i);
        return v;
    }

    Var scalar_input(T value) { return input(Tensor<T>::scalar(value)); }

    const Tensor<T>& val(Var v) const { return node(v).value; }

    bool requires_grad(Var v) const { return node(v).requires_grad; }

    /// Gradient of the last backward() target w.r.t. v. Zero tensor if v
    /// did not participate in the loss.
    const Tensor<T>& grad(Var v) {
        Node& n = node_mut(v);
        if (!n.requires_grad) throw Error("grad: variable does not require gradients");
        if (n.grad.data.empty()) n.grad = Tensor<T>::zeros(n.value.shape);
        return n.grad;
    }

    const std::vector<std::pair<std::string, size_t>>& named_params() const { return named_; }

    size_t size() const { return nodes_.size(); }

    void backward(Var loss) {
        Node& top = node_mut(loss);
        if (top.value.size() != 1) throw Error("backward: loss must be a scalar");
        if (!top.requires_grad)
            throw Error("backward: loss does not depend on any parameter");
        ensure_grad(loss.i);
        top.grad.data[0] = T(1);
        for (size_t i = loss.i + 1; i-- > 0;) {
            Node& n = nodes_[i];
            if (n.back && !n.grad.data.empty()) n.back(*this);
        }
    }

    // ---- arithmetic ----

    Var add(Var a, Var b) {
        const Tensor<T>&av = val(a), &bv = val(b);
        require(av.same_shape(bv), "add", av, bv);
        Tensor<T> out = av;
        for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += bv.data[i];
        return push(std::move(out), requires_grad(a) || requires_grad(b), {a, b},
                    [a, b](Tape& t, const Tensor<T>& g) {
                        t.accumulate(a, g);
                        t.accumulate(b, g);
                    });
    }

    /// Adds a rank-1 bias to every row of a rank-2 matrix.
    Var add_bias(Var a, Var bias) {
        const Tensor<T>&av = val(a), &bv = val(bias);
        if (av.rank() != 2 || bv.rank() != 1 || av.cols() != bv.size())
            throw Error("add_bias: shapes " + av.shape_str() + " and " + bv.shape_str());
        Tensor<T> out = av;
        size_t rows = av.rows(), cols = av.cols();
        for (size_t i = 0; i < rows; ++i)
            for (size_t j = 0; j < cols; ++j) out.data[i * cols + j] += bv.data[j];
        return push(std::move(out), requires_grad(a) || requires_grad(bias), {a, bias},
                    [a, bias, rows, cols](Tape& t, const Tensor<T>& g) {
                        t.accumulate(a, g);
                        if (t.requires_grad(bias)) {
                            Tensor<T>& bg = t.grad_ref(bias);
                            for (size_t i = 0; i < rows; ++i)
                                for (size_t j = 0; j < cols; ++j)
                                    bg.data[j] += g.data[i * cols + j];
                        }
                    });
    }

    Var sub(Var a, Var b) {
        const Tensor<T>&av = val(a), &bv = val(b);
        require(av.same_shape(bv), "sub", av, bv);
        Tensor<T> out = av;
        for (size_t i = 0; i < out.data.size(); ++i) out.data[i] -= bv.data[i];
        return push(std::move(out), requires_grad(a) || requires_grad(b), {a, b},
                    [a, b](Tape& t, const Tensor<T>& g) {
                        t.accumulate(a, g);
                        t.accumulate_scaled(b, g, T(-1));
                    });
    }

    Var mul(Var a, Var b) {
        const Tensor<T>&av = val(a), &bv = val(b);
        require(av.same_shape(bv), "mul", av, bv);
        Tensor<T> out = av;
        for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= bv.data[i];
        return push(std::move(out), requires_grad(a) || requires_grad(b), {a, b},
                    [a, b](Tape& t, const Tensor<T>& g) {
                        if (t.requires_grad(a)) {
                            const Tensor<T>& bv2 = t.val(b);
                            Tensor<T>& ag = t.grad_ref(a);
                            for (size_t i = 0; i < g.data.size(); ++i)
                                ag.data[i] += g.data[i] * bv2.data[i];
                        }
                        if (t.requires_grad(b)) {
                            const Tensor<T>& av2 = t.val(a);
                            Tensor<T>& bg = t.grad_ref(b);
                            for (size_t i = 0; i < g.data.size(); ++i)
                                bg.data[i] += g.data[i] * av2.data[i];
                        }
                    });
    }

    Var scale(Var a, double s) {
        Tensor<T> out = val(a);
        for (T& v : out.data) v = static_cast<T>(v * s);
        return push(std::move(out), requires_grad(a), {a},
                    [a, s](Tape& t, const Tensor<T>& g) {
                        t.accumulate_scaled(a, g, static_cast<T>(s));
                    });
    }

    Var neg(Var a) { return scale(a, -1.0); }

    Var add_scalar(Var a, double c) {
        Tensor<T> out = val(a);
        for (T& v : out.data) v = static_cast<T>(v + c);
        return push(std::move(out), requires_grad(a), {a},
                    [a](Tape& t, const Tensor<T>& g) { t.accumulate(a, g); });
    }

    Var exp(Var a) {
        Tensor<T> out = val(a);
        for (T& v : out.data) v = std::exp(v);
        return push(std::move(out), requires_grad(a), {a},
                    [a](Tape& t, const Tensor<T>& g) {
                        // self points at the node being differentiated; its
                        // value is exactly the needed local derivative.
                        const Tensor<T>& y = t.nodes_[t.current_].value;
                        Tensor<T>& ag = t.grad_ref(a);
                        for (size_t i = 0; i < g.data.size(); ++i)
                            ag.data[i] += g.data[i] * y.data[i];
                    });
    }

    /// Exact GELU: x * Phi(x) with the Gaussian CDF.
    Var gelu(Var a) {
        const Tensor<T>& av = val(a);
        Tensor<T> out = av;
        for (T& v : out.data) {
            double x = static_cast<double>(v);
            v = static_cast<T>(0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)));
        }
        return push(std::move(out), requires_grad(a), {a},
                    [a](Tape& t, const Tensor<T>& g) {
                        const Tensor<T>& x = t.val(a);
                        Tensor<T>& ag = t.grad_ref(a);
                        constexpr double inv_sqrt_2pi = 0.3989422804014327;
                        for (size_t i = 0; i < g.data.size(); ++i) {
                            double xi = static_cast<double>(x.data[i]);
                            double cdf = 0.5 * (1.0 + std::erf(xi * M_SQRT1_2));
                            double pdf = inv_sqrt_2pi * std::exp(-0.5 * xi * xi);
                            ag.data[i] += g.data[i] * static_cast<T>(cdf + xi * pdf);
                        }
                    });
    }

    // ---- matrix ops ----

    Var matmul(Var a, Var b, bool trans_a = false, bool trans_b = false) {
        const Tensor<T>&av = val(a), &bv = val(b);
        if (av.rank() != 2 || bv.rank() != 2)
            throw Error("matmul: operands must be rank 2, got " + av.shape_str() + " and " +
                        bv.shape_str());
        size_t m = trans_a ? av.shape[1] : av.shape[0];
        size_t k = trans_a ? av.shape[0] : av.shape[1];
        size_t kb = trans_b ? bv.shape[1] : bv.shape[0];
        size_t n = trans_b ? bv.shape[0] : bv.shape[1];
        if (k != kb)
            throw Error("matmul: inner dimensions disagree, " + av.shape_str() +
                        (trans_a ? "^T" : "") + " x " + bv.shape_str() + (trans_b ? "^T" : ""));
        Tensor<T> out = Tensor<T>::zeros({m, n});
        gemm(av.data.data(), bv.data.data(), out.data.data(), m, n, k, trans_a, trans_b, false);
        return push(std::move(out), requires_grad(a) || requires_grad(b), {a, b},
                    [a, b, m, n, k, trans_a, trans_b](Tape& t, const Tensor<T>& g) {
                        const Tensor<T>&A = t.val(a), &B = t.val(b);
                        if (t.requires_grad(a)) {
                            Tensor<T>& ga = t.grad_ref(a);
                            if (!trans_a && !trans_b)
                                gemm(g.data.data(), B.data.data(), ga.data.data(), m, k, n,
                                     false, true, true);
                            else if (!trans_a && trans_b)
                                gemm(g.data.data(), B.data.data(), ga.data.data(), m, k, n,
                                     false, false, true);
                            else if (trans_a && !trans_b)
                                gemm(B.data.data(), g.data.data(), ga.data.data(), k, m, n,
                                     false, true, true);
                            else
                                gemm(B.data.data(), g.data.data(), ga.data.data(), k, m, n,
                                     true, true, true);
                        }
                        if (t.requires_grad(b)) {
                            Tensor<T>& gb = t.grad_ref(b);
                            if (!trans_a && !trans_b)
                                gemm(A.data.data(), g.data.data(), gb.data.data(), k, n, m,
                                     true, false, true);
                            else if (!trans_a && trans_b)
                                gemm(g.data.data(), A.data.data(), gb.data.data(), n, k, m,
                                     true, false, true);
                            else if (trans_a && !trans_b)
                                gemm(A.data.data(), g.data.data(), gb.data.data(), k, n, m,
                                     false, false, true);
                            else
                                gemm(g.data.data(), A.data.data(), gb.data.data(), n, k, m,
                                     true, true, true);
                        }
                    });
    }

    // ---- shape ops ----

    Var slice_rows(Var a, size_t r0, size_t r1) {
        const Tensor<T>& av = val(a);
        if (av.rank() != 2 || r0 > r1 || r1 > av.rows())
            throw Error("slice_rows: range [" + std::to_string(r0) + ", " + std::to_string(r1) +
                        ") invalid for " + av.shape_str());
        size_t cols = av.cols();
        Tensor<T> out = Tensor<T>::zeros({r1 - r0, cols});
        std::copy(av.data.begin() + static_cast<ptrdiff_t>(r0 * cols),
                  av.data.begin() + static_cast<ptrdiff_t>(r1 * cols), out.data.begin());
        return push(std::move(out), requires_grad(a), {a},
                    [a, r0, cols](Tape& t, const Tensor<T>& g) {
                        Tensor<T>& ag = t.grad_ref(a);
                        for (size_t i = 0; i < g.data.size(); ++i)
                            ag.data[r0 * cols + i] += g.data[i];
                    });
    }

    Var slice_cols(Var a, size_t c0, size_t c1) {
        const Tensor<T>& av = val(a);
        if (av.rank() != 2 || c0 > c1 || c1 > av.cols())
            throw Error("slice_cols: range [" + std::to_string(c0) + ", " + std::to_string(c1) +
                        ") invalid for " + av.shape_str());
        size_t rows = av.rows(), cols = av.cols(), w = c1 - c0;
        Tensor<T> out = Tensor<T>::zeros({rows, w});
        for (size_t i = 0; i < rows; ++i)
            std::copy(av.data.begin() + static_cast<ptrdiff_t>(i * cols + c0),
                      av.data.begin() + static_cast<ptrdiff_t>(i * cols + c1),
                      out.data.begin() + static_cast<ptrdiff_t>(i * w));
        return push(std::move(out), requires_grad(a), {a},
                    [a, c0, rows, cols, w](Tape& t, const Tensor<T>& g) {
                        Tensor<T>& ag = t.grad_ref(a);
                        for (size_t i = 0; i < rows; ++i)
                            for (size_t j = 0; j < w; ++j)
                                ag.data[i * cols + c0 + j] += g.data[i * w + j];
                    });
    }

    Var concat_cols(const std::vector<Var>& parts) {
        if (parts.empty()) throw Error("concat_cols: no operands");
        size_t rows = val(parts[0]).rows(), total = 0;
        bool rg = false;
        for (Var p : parts) {
            const Tensor<T>& pv = val(p);
            if (pv.rank() != 2 || pv.rows() != rows)
                throw Error("concat_cols: row mismatch at " + pv.shape_str());
            total += pv.cols();
            rg = rg || requires_grad(p);
        }
        Tensor<T> out = Tensor<T>::zeros({rows, total});
        size_t off = 0;
        for (Var p : parts) {
            const Tensor<T>& pv = val(p);
            size_t w = pv.cols();
            for (size_t i = 0; i < rows; ++i)
                std::copy(pv.data.begin() + static_cast<ptrdiff_t>(i * w),
                          pv.data.begin() + static_cast<ptrdiff_t>((i + 1) * w),
                          out.data.begin() + static_cast<ptrdiff_t>(i * total + off));
            off += w;
        }
        std::vector<Var> deps = parts;
        return push(std::move(out), rg, deps,
                    [parts, rows, total](Tape& t, const Tensor<T>& g) {
                        size_t off2 = 0;
                        for (Var p : parts) {
                            size_t w = t.val(p).cols();
                            if (t.requires_grad(p)) {
                                Tensor<T>& pg = t.grad_ref(p);
                                for (size_t i = 0; i < rows; ++i)
                                    for (size_t j = 0; j < w; ++j)
                                        pg.data[i * w + j] += g.data[i * total + off2 + j];
                            }
                            off2 += w;
                        }
                    });
    }

    Var concat_rows(const std::vector<Var>& parts) {
        if (parts.empty()) throw Error("concat_rows: no operands");
        size_t cols = val(parts[0]).cols(), total = 0;
        bool rg = false;
        for (Var p : parts) {
            const Tensor<T>& pv = val(p);
            if (pv.rank() != 2 || pv.cols() != cols)
                throw Error("concat_rows: column mismatch at " + pv.shape_str());
            total += pv.rows();
            rg = rg || requires_grad(p);
        }
        Tensor<T> out = Tensor<T>::zeros({total, cols});
        size_t off = 0;
        for (Var p : parts) {
            const Tensor<T>& pv = val(p);
            std::copy(pv.data.begin(), pv.data.end(),
                      out.data.begin() + static_cast<ptrdiff_t>(off));
            off += pv.data.size();
        }
        std::vector<Var> deps = parts;
        return push(std::move(out), rg, deps, [parts](Tape& t, const Tensor<T>& g) {
            size_t off2 = 0;
            for (Var p : parts) {
                size_t n = t.val(p).data.size();
                if (t.requires_grad(p)) {
                    Tensor<T>& pg = t.grad_ref(p);
                    for (size_t i = 0; i < n; ++i) pg.data[i] += g.data[off2 + i];
                }
                off2 += n;
            }
        });
    }

    Var gather_rows(Var a, std::vector<size_t> rows) {
        const Tensor<T>& av = val(a);
        if (av.rank() != 2) throw Error("gather_rows: operand must be rank 2");
        size_t cols = av.cols();
        for (size_t r : rows)
            if (r >= av.rows())
                throw Error("gather_rows: row " + std::to_string(r) + " out of range for " +
                            av.shape_str());
        Tensor<T> out = Tensor<T>::zeros({rows.size(), cols});
        for (size_t i = 0; i < rows.size(); ++i)
            std::copy(av.data.begin() + static_cast<ptrdiff_t>(rows[i] * cols),
                      av.data.begin() + static_cast<ptrdiff_t>((rows[i] + 1) * cols),
                      out.data.begin() + static_cast<ptrdiff_t>(i * cols));
        return push(std::move(out), requires_grad(a), {a},
                    [a, rows = std::move(rows), cols](Tape& t, const Tensor<T>& g) {
                        Tensor<T>& ag = t.grad_ref(a);
                        for (size_t i = 0; i < rows.size(); ++i)
                            for (size_t j = 0; j < cols; ++j)
                                ag.data[rows[i] * cols + j] += g.data[i * cols + j];
                    });
    }

    Var embedding_lookup(Var table, std::vector<int> ids) {
        const Tensor<T>& tv = val(table);
        if (tv.rank() != 2) throw Error("embedding_lookup: table must be rank 2");
        std::vector<size_t> rows;
        rows.reserve(ids.size());
        for (int id : ids) {
            if (id < 0 || static_cast<size_t>(id) >= tv.rows())
                throw Error("embedding_lookup: id " + std::to_string(id) +
                            " out of range for table " + tv.shape_str());
            rows.push_back(static_cast<size_t>(id));
        }
        return gather_rows(table, std::move(rows));
    }

    // ---- normalization and activations over rows ----

    Var softmax(Var a) {
        const Tensor<T>& av = val(a);
        if (av.rank() != 2 || av.size() == 0) throw Error("softmax: operand must be non-empty rank 2");
        size_t rows = av.rows(), cols = av.cols();
        Tensor<T> out = av;
        for (size_t i = 0; i < rows; ++i) {
            T* row = out.data.data() + i * cols;
            T mx = row[0];
            for (size_t j = 1; j < cols; ++j) mx = std::max(mx, row[j]);
            T sum = T(0);
            for (size_t j = 0; j < cols; ++j) {
                row[j] = std::exp(row[j] - mx);
                sum += row[j];
            }
            for (size_t j = 0; j < cols; ++j) row[j] /= sum;
        }
        return push(std::move(out), requires_grad(a), {a},
                    [a, rows, cols](Tape& t, const Tensor<T>& g) {
                        const Tensor<T>& y = t.nodes_[t.current_].value;
                        Tensor<T>& ag = t.grad_ref(a);
                        for (size_t i = 0; i < rows; ++i) {
                            const T* yi = y.data.data() + i * cols;
                            const T* gi = g.data.data() + i * cols;
                            T dot = T(0);
                            for (size_t j = 0; j < cols; ++j) dot += gi[j] * yi[j];
                            T* ai = ag.data.data() + i * cols;
                            for (size_t j = 0; j < cols; ++j) ai[j] += yi[j] * (gi[j] - dot);
                        }
                    });
    }

    Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5) {
        const Tensor<T>&xv = val(x), &gv = val(gain), &bv = val(bias);
        if (xv.rank() != 2 || gv.rank() != 1 || bv.rank() != 1 || gv.size() != xv.cols() ||
            bv.size() != xv.cols())
            throw Error("layer_norm: shapes " + xv.shape_str() + ", " + gv.shape_str() + ", " +
                        bv.shape_str());
        size_t rows = xv.rows(), cols = xv.cols();
        Tensor<T> xhat = Tensor<T>::zeros({rows, cols});
        Tensor<T> istd_t = Tensor<T>::zeros({rows});
        Tensor<T> out = Tensor<T>::zeros({rows, cols});
        for (size_t i = 0; i < rows; ++i) {
            const T* xi = xv.data.data() + i * cols;
            T mu = T(0);
            for (size_t j = 0; j < cols; ++j) mu += xi[j];
            mu /= static_cast<T>(cols);
            T var = T(0);
            for (size_t j = 0; j < cols; ++j) var += (xi[j] - mu) * (xi[j] - mu);
            var /= static_cast<T>(cols);
            T istd = T(1) / std::sqrt(var + static_cast<T>(eps));
            istd_t.data[i] = istd;
            for (size_t j = 0; j < cols; ++j) {
                T h = (xi[j] - mu) * istd;
                xhat.data[i * cols + j] = h;
                out.data[i * cols + j] = gv.data[j] * h + bv.data[j];
            }
        }
        bool rg = requires_grad(x) || requires_grad(gain) || requires_grad(bias);
        return push(std::move(out), rg, {x, gain, bias},
                    [x, gain, bias, rows, cols, xhat = std::move(xhat),
                     istd_t = std::move(istd_t)](Tape& t, const Tensor<T>& g) {
                        const Tensor<T>& gv2 = t.val(gain);
                        if (t.requires_grad(gain)) {
                            Tensor<T>& gg = t.grad_ref(gain);
                            for (size_t i = 0; i < rows; ++i)
                                for (size_t j = 0; j < cols; ++j)
                                    gg.data[j] += g.data[i * cols + j] * xhat.data[i * cols + j];
                        }
                        if (t.requires_grad(bias)) {
                            Tensor<T>& bg = t.grad_ref(bias);
                            for (size_t i = 0; i < rows; ++i)
                                for (size_t j = 0; j < cols; ++j) bg.data[j] += g.data[i * cols + j];
                        }
                        if (t.requires_grad(x)) {
                            Tensor<T>& xg = t.grad_ref(x);
                            for (size_t i = 0; i < rows; ++i) {
                                const T* gi = g.data.data() + i * cols;
                                const T* hi = xhat.data.data() + i * cols;
                                T mean_dh = T(0), mean_dh_h = T(0);
                                for (size_t j = 0; j < cols; ++j) {
                                    T dh = gi[j] * gv2.data[j];
                                    mean_dh += dh;
                                    mean_dh_h += dh * hi[j];
                                }
                                mean_dh /= static_cast<T>(cols);
                                mean_dh_h /= static_cast<T>(cols);
                                T istd = istd_t.data[i];
                                for (size_t j = 0; j < cols; ++j) {
                                    T dh = gi[j] * gv2.data[j];
                                    xg.data[i * cols + j] +=
                                        istd * (dh - mean_dh - hi[j] * mean_dh_h);
                                }
                            }
                        }
                    });
    }

    // ---- reductions and losses ----

    Var sum(Var a) {
        const Tensor<T>& av = val(a);
        T s = T(0);
        for (T v : av.data) s += v;
        return push(Tensor<T>::scalar(s), requires_grad(a), {a},
                    [a](Tape& t, const Tensor<T>& g) {
                        Tensor<T>& ag = t.grad_ref(a);
                        for (T& v : ag.data) v += g.data[0];
                    });
    }

    Var mean(Var a) {
        const Tensor<T>& av = val(a);
        if (av.size() == 0) throw Error("mean: empty tensor");
        return scale(sum(a), 1.0 / static_cast<double>(av.size()));
    }

    /// Mean negative log-likelihood of targets under row-wise softmax of
    /// logits. Numerically stable via the log-sum-exp trick.
    Var cross_entropy_nll(Var logits, std::vector<int> targets) {
        const Tensor<T>& lv = val(logits);
        if (lv.rank() != 2) throw Error("cross_entropy_nll: logits must be rank 2");
        size_t rows = lv.rows(), cols = lv.cols();
        if (targets.size() != rows)
            throw Error("cross_entropy_nll: " + std::to_string(targets.size()) +
                        " targets for " + std::to_string(rows) + " rows");
        if (rows == 0) throw Error("cross_entropy_nll: empty batch");
        for (int tgt : targets)
            if (tgt < 0 || static_cast<size_t>(tgt) >= cols)
                throw Error("cross_entropy_nll: target " + std::to_string(tgt) + " out of range");
        double total = 0.0;
        for (size_t i = 0; i < rows; ++i) {
            const T* row = lv.data.data() + i * cols;
            T mx = row[0];
            for (size_t j = 1; j < cols; ++j) mx = std::max(mx, row[j]);
            double lse = 0.0;
            for (size_t j = 0; j < cols; ++j) lse += std::exp(static_cast<double>(row[j] - mx));
            lse = std::log(lse) + static_cast<double>(mx);
            total += lse - static_cast<double>(row[static_cast<size_t>(targets[i])]);
        }
        T loss = static_cast<T>(total / static_cast<double>(rows));
        return push(Tensor<T>::scalar(loss), requires_grad(logits), {logits},
                    [logits, targets = std::move(targets), rows, cols](Tape& t,
                                                                       const Tensor<T>& g) {
                        const Tensor<T>& lv2 = t.val(logits);
                        Tensor<T>& lg = t.grad_ref(logits);
                        T scale = g.data[0] / static_cast<T>(rows);
                        for (size_t i = 0; i < rows; ++i) {
                            const T* row = lv2.data.data() + i * cols;
                            T mx = row[0];
                            for (size_t j = 1; j < cols; ++j) mx = std::max(mx, row[j]);
                            T denom = T(0);
                            for (size_t j = 0; j < cols; ++j) denom += std::exp(row[j] - mx);
                            T* gi = lg.data.data() + i * cols;
                            for (size_t j = 0; j < cols; ++j) {
                                T p = std::exp(row[j] - mx) / denom;
                                gi[j] += scale * (p - (static_cast<size_t>(targets[i]) == j
                                                           ? T(1)
                                                           : T(0)));
                            }
                        }
                    });
    }

    /// Mean absolute error over all elements; subgradient 0 at exact ties.
    Var mean_abs_error(Var pred, Var target) {
        const Tensor<T>&pv = val(pred), &tv = val(target);
        require(pv.same_shape(tv), "mean_abs_error", pv, tv);
        if (pv.size() == 0) throw Error("mean_abs_error: empty tensors");
        double total = 0.0;
        for (size_t i = 0; i < pv.data.size(); ++i)
            total += std::abs(static_cast<double>(pv.data[i] - tv.data[i]));
        T loss = static_cast<T>(total / static_cast<double>(pv.size()));
        return push(Tensor<T>::scalar(loss), requires_grad(pred) || requires_grad(target),
                    {pred, target}, [pred, target](Tape& t, const Tensor<T>& g) {
                        const Tensor<T>&pv2 = t.val(pred), &tv2 = t.val(target);
                        T scale = g.data[0] / static_cast<T>(pv2.size());
                        auto sign = [](T d) { return d > T(0) ? T(1) : (d < T(0) ? T(-1) : T(0)); };
                        if (t.requires_grad(pred)) {
                            Tensor<T>& pg = t.grad_ref(pred);
                            for (size_t i = 0; i < pv2.data.size(); ++i)
                                pg.data[i] += scale * sign(pv2.data[i] - tv2.data[i]);
                        }
                        if (t.requires_grad(target)) {
                            Tensor<T>& tg = t.grad_ref(target);
                            for (size_t i = 0; i < pv2.data.size(); ++i)
                                tg.data[i] -= scale * sign(pv2.data[i] - tv2.data[i]);
                        }
                    });
    }

private:
    struct Node {
        Tensor<T> value;
        Tensor<T> grad;
        bool requires_grad = false;
        std::function<void(Tape&)> back;
    };

    std::vector<Node> nodes_;
    std::vector<std::pair<std::string, size_t>> named_;
    size_t current_ = 0;  // node whose backward closure is running

    const Node& node(Var v) const {
        if (v.i >= nodes_.size()) throw Error("invalid tape variable");
        return nodes_[v.i];
    }
    Node& node_mut(Var v) {
        if (v.i >= nodes_.size()) throw Error("invalid tape variable");
        return nodes_[v.i];
    }

    void ensure_grad(size_t i) {
        if (nodes_[i].grad.data.empty()) nodes_[i].grad = Tensor<T>::zeros(nodes_[i].value.shape);
    }

    Tensor<T>& grad_ref(Var v) {
        ensure_grad(v.i);
        return nodes_[v.i].grad;
    }

    void accumulate(Var v, const Tensor<T>& g) {
        if (!requires_grad(v)) return;
        Tensor<T>& dst = grad_ref(v);
        for (size_t i = 0; i < g.data.size(); ++i) dst.data[i] += g.data[i];
    }

    void accumulate_scaled(Var v, const Tensor<T>& g, T s) {
        if (!requires_grad(v)) return;
        Tensor<T>& dst = grad_ref(v);
        for (size_t i = 0; i < g.data.size(); ++i) dst.data[i] += s * g.data[i];
    }

    static void require(bool ok, const char* op, const Tensor<T>& a, const Tensor<T>& b) {
        if (!ok)
            throw Error(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
                        b.shape_str());
    }

    Var push(Tensor<T> value, bool requires_grad, std::initializer_list<Var> deps,
             std::function<void(Tape&, const Tensor<T>&)> back) {
        return push(std::move(value), requires_grad, std::vector<Var>(deps), std::move(back));
    }

    Var push(Tensor<T> value, bool requires_grad, const std::vector<Var>& deps,
             std::function<void(Tape&, const Tensor<T>&)> back) {
        for (Var d : deps) node(d);  // validates handles
        Node n;
        n.value = std::move(value);
        n.requires_grad = requires_grad;
        size_t idx = nodes_.size();
        if (requires_grad && back)
            n.back = [idx, fn = std::move(back)](Tape& t) {
                t.current_ = idx;
                fn(t, t.nodes_[idx].grad);
            };
        nodes_.push_back(std::move(n));
        return Var{idx};
    }
};

}  // namespace geoadapt::nn
