#include "aarr/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_map>
#include <unordered_set>

namespace aarr::ad {

Var Var::leaf(Tensor value) { return make_node(std::move(value), {}, nullptr); }

Var Var::constant(Tensor value) { return make_node(std::move(value), {}, nullptr); }

const Tensor& Var::value() const {
    if (!node_) throw ContractError("use of an empty Var");
    return node_->value;
}

Var make_node(Tensor value, std::vector<Var> parents,
              std::function<void(const Tensor&, std::span<Tensor>)> backward_fn) {
    Var v;
    v.node_ = std::make_shared<Node>(Node{std::move(value), std::move(parents), std::move(backward_fn)});
    return v;
}

std::vector<Tensor> backward(const Var& loss, std::span<const Var> targets) {
    if (loss.value().numel() != 1) {
        throw ContractError("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
    }

    // Post-order over the graph: parents before children.
    std::vector<const Node*> order;
    std::unordered_set<const Node*> visited;
    std::vector<std::pair<const Node*, std::size_t>> stack{{loss.id(), 0}};
    visited.insert(loss.id());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            const Node* parent = node->parents[next++].id();
            if (visited.insert(parent).second) stack.emplace_back(parent, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    std::unordered_set<const Node*> target_set;
    for (const auto& t : targets) target_set.insert(t.id());

    // A node needs a gradient if it is a target or depends on one.
    std::unordered_set<const Node*> needs;
    for (const Node* node : order) {
        bool n = target_set.contains(node);
        for (const auto& p : node->parents) n = n || needs.contains(p.id());
        if (n) needs.insert(node);
    }

    std::unordered_map<const Node*, Tensor> grads;
    if (needs.contains(loss.id())) grads.emplace(loss.id(), Tensor(loss.shape(), 1.0));

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        const Node* node = *it;
        if (node->parents.empty() || !needs.contains(node)) continue;
        auto g = grads.find(node);
        if (g == grads.end()) continue;
        std::vector<Tensor> parent_grads;
        parent_grads.reserve(node->parents.size());
        for (const auto& p : node->parents) parent_grads.emplace_back(p.shape(), 0.0);
        node->backward_fn(g->second, parent_grads);
        for (std::size_t i = 0; i < node->parents.size(); ++i) {
            const Node* p = node->parents[i].id();
            if (!needs.contains(p)) continue;
            auto [slot, inserted] = grads.try_emplace(p, std::move(parent_grads[i]));
            if (!inserted) slot->second += parent_grads[i];
        }
    }

    std::vector<Tensor> out;
    out.reserve(targets.size());
    for (const auto& t : targets) {
        auto g = grads.find(t.id());
        out.push_back(g != grads.end() ? g->second : Tensor(t.shape(), 0.0));
    }
    return out;
}

std::vector<Tensor> backward(const Var& loss, std::initializer_list<Var> targets) {
    return backward(loss, std::span<const Var>(targets.begin(), targets.size()));
}

namespace {

void require_matrix(const Var& a, const char* op) {
    if (a.value().ndim() != 2) {
        throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_str(a.shape()));
    }
}

void require_axis(std::size_t axis, const char* op) {
    if (axis > 1) throw DimensionError(std::string(op) + ": axis must be 0 or 1");
}

template <typename F, typename D>
Var unary(const Var& a, F f, D dfdx) {
    Tensor out = a.value();
    for (auto& x : out.data()) x = f(x);
    Tensor y = out;
    return make_node(std::move(out), {a}, [a, y = std::move(y), dfdx](const Tensor& g, std::span<Tensor> pg) {
        const Tensor& x = a.value();
        for (std::size_t i = 0; i < g.numel(); ++i) pg[0][i] = g[i] * dfdx(x[i], y[i]);
    });
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
    Tensor out = aarr::matmul(a.value(), b.value());
    return make_node(std::move(out), {a, b}, [a, b](const Tensor& g, std::span<Tensor> pg) {
        pg[0] = aarr::matmul(g, b.value().transposed());
        pg[1] = aarr::matmul(a.value().transposed(), g);
    });
}

Var add(const Var& a, const Var& b) {
    require_same_shape(a.value(), b.value(), "add");
    return make_node(a.value() + b.value(), {a, b}, [](const Tensor& g, std::span<Tensor> pg) {
        pg[0] = g;
        pg[1] = g;
    });
}

Var sub(const Var& a, const Var& b) {
    require_same_shape(a.value(), b.value(), "sub");
    return make_node(a.value() - b.value(), {a, b}, [](const Tensor& g, std::span<Tensor> pg) {
        pg[0] = g;
        pg[1] = -1.0 * g;
    });
}

Var mul(const Var& a, const Var& b) {
    require_same_shape(a.value(), b.value(), "mul");
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= b.value()[i];
    return make_node(std::move(out), {a, b}, [a, b](const Tensor& g, std::span<Tensor> pg) {
        for (std::size_t i = 0; i < g.numel(); ++i) {
            pg[0][i] = g[i] * b.value()[i];
            pg[1][i] = g[i] * a.value()[i];
        }
    });
}

Var div(const Var& a, const Var& b) {
    require_same_shape(a.value(), b.value(), "div");
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] /= b.value()[i];
    return make_node(std::move(out), {a, b}, [a, b](const Tensor& g, std::span<Tensor> pg) {
        for (std::size_t i = 0; i < g.numel(); ++i) {
            const double bi = b.value()[i];
            pg[0][i] = g[i] / bi;
            pg[1][i] = -g[i] * a.value()[i] / (bi * bi);
        }
    });
}

Var scale(const Var& a, double s) {
    return make_node(s * a.value(), {a}, [s](const Tensor& g, std::span<Tensor> pg) { pg[0] = s * g; });
}

Var transpose(const Var& a) {
    require_matrix(a, "transpose");
    return make_node(a.value().transposed(), {a},
                     [](const Tensor& g, std::span<Tensor> pg) { pg[0] = g.transposed(); });
}

Var exp(const Var& a) {
    return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(const Var& a) {
    return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var sigmoid(const Var& a) {
    return unary(
        a,
        [](double x) {
            if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
            const double e = std::exp(x);
            return e / (1.0 + e);
        },
        [](double, double y) { return y * (1.0 - y); });
}

Var softplus(const Var& a) {
    return unary(
        a, [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); },
        [](double x, double) {
            if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
            const double e = std::exp(x);
            return e / (1.0 + e);
        });
}

Var sum(const Var& a) {
    double s = 0.0;
    for (double x : a.value().data()) s += x;
    return make_node(Tensor::scalar(s), {a}, [](const Tensor& g, std::span<Tensor> pg) {
        for (auto& x : pg[0].data()) x = g[0];
    });
}

Var sum_axis(const Var& a, std::size_t axis) {
    require_matrix(a, "sum_axis");
    require_axis(axis, "sum_axis");
    const Tensor& x = a.value();
    const std::size_t m = x.rows(), n = x.cols();
    Tensor out(axis == 0 ? Shape{1, n} : Shape{m, 1});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[axis == 0 ? j : i] += x(i, j);
    return make_node(std::move(out), {a}, [axis, m, n](const Tensor& g, std::span<Tensor> pg) {
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) pg[0](i, j) = g[axis == 0 ? j : i];
    });
}

Var mean_axis(const Var& a, std::size_t axis) {
    require_matrix(a, "mean_axis");
    require_axis(axis, "mean_axis");
    return scale(sum_axis(a, axis), 1.0 / static_cast<double>(a.value().dim(axis)));
}

MaxResult max_axis(const Var& a, std::size_t axis) {
    require_matrix(a, "max_axis");
    require_axis(axis, "max_axis");
    const Tensor& x = a.value();
    const std::size_t m = x.rows(), n = x.cols();
    const std::size_t slices = axis == 0 ? n : m;
    const std::size_t len = axis == 0 ? m : n;
    std::vector<std::size_t> arg(slices, 0);
    Tensor out(axis == 0 ? Shape{1, n} : Shape{m, 1});
    for (std::size_t s = 0; s < slices; ++s) {
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t t = 0; t < len; ++t) {
            const double v = axis == 0 ? x(t, s) : x(s, t);
            if (v > best) {
                best = v;
                arg[s] = t;
            }
        }
        out[s] = best;
    }
    Var values = make_node(std::move(out), {a}, [axis, arg](const Tensor& g, std::span<Tensor> pg) {
        for (std::size_t s = 0; s < arg.size(); ++s) {
            if (axis == 0)
                pg[0](arg[s], s) = g[s];
            else
                pg[0](s, arg[s]) = g[s];
        }
    });
    return {std::move(values), std::move(arg)};
}

Var broadcast(const Var& v, std::size_t axis, std::size_t extent) {
    require_matrix(v, "broadcast");
    require_axis(axis, "broadcast");
    const Tensor& x = v.value();
    if (extent == 0) throw DimensionError("broadcast: extent must be positive");
    if ((axis == 1 && x.cols() != 1) || (axis == 0 && x.rows() != 1)) {
        throw DimensionError("broadcast: expected a vector with extent 1 along axis " + std::to_string(axis) +
                             ", got " + shape_str(x.shape()));
    }
    const std::size_t m = axis == 0 ? extent : x.rows();
    const std::size_t n = axis == 0 ? x.cols() : extent;
    Tensor out({m, n});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out(i, j) = axis == 0 ? x[j] : x[i];
    return make_node(std::move(out), {v}, [axis, m, n](const Tensor& g, std::span<Tensor> pg) {
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) pg[0][axis == 0 ? j : i] += g(i, j);
    });
}

Tensor softmax_tensor(const Tensor& x, std::size_t axis) {
    if (x.ndim() != 2) throw DimensionError("softmax: expected a matrix, got " + shape_str(x.shape()));
    require_axis(axis, "softmax");
    const std::size_t m = x.rows(), n = x.cols();
    const std::size_t slices = axis == 0 ? n : m;
    const std::size_t len = axis == 0 ? m : n;
    Tensor out(x.shape());
    auto at = [&](Tensor& t, std::size_t s, std::size_t k) -> double& { return axis == 0 ? t(k, s) : t(s, k); };
    auto cat = [&](std::size_t s, std::size_t k) { return axis == 0 ? x(k, s) : x(s, k); };
    for (std::size_t s = 0; s < slices; ++s) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < len; ++k) mx = std::max(mx, cat(s, k));
        double z = 0.0;
        for (std::size_t k = 0; k < len; ++k) z += (at(out, s, k) = std::exp(cat(s, k) - mx));
        for (std::size_t k = 0; k < len; ++k) at(out, s, k) /= z;
    }
    return out;
}

Var softmax_axis(const Var& a, std::size_t axis) {
    Tensor y = softmax_tensor(a.value(), axis);
    Tensor yc = y;
    return make_node(std::move(y), {a}, [axis, y = std::move(yc)](const Tensor& g, std::span<Tensor> pg) {
        const std::size_t m = y.rows(), n = y.cols();
        // dx = y * (g - <g, y>) per slice
        if (axis == 1) {
            for (std::size_t i = 0; i < m; ++i) {
                double dot = 0.0;
                for (std::size_t j = 0; j < n; ++j) dot += g(i, j) * y(i, j);
                for (std::size_t j = 0; j < n; ++j) pg[0](i, j) = y(i, j) * (g(i, j) - dot);
            }
        } else {
            for (std::size_t j = 0; j < n; ++j) {
                double dot = 0.0;
                for (std::size_t i = 0; i < m; ++i) dot += g(i, j) * y(i, j);
                for (std::size_t i = 0; i < m; ++i) pg[0](i, j) = y(i, j) * (g(i, j) - dot);
            }
        }
    });
}

Var mse(const Var& a, const Var& b) {
    require_same_shape(a.value(), b.value(), "mse");
    const std::size_t n = a.value().numel();
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = a.value()[i] - b.value()[i];
        s += d * d;
    }
    return make_node(Tensor::scalar(s / static_cast<double>(n)), {a, b},
                     [a, b, n](const Tensor& g, std::span<Tensor> pg) {
                         const double c = 2.0 * g[0] / static_cast<double>(n);
                         for (std::size_t i = 0; i < n; ++i) {
                             const double d = a.value()[i] - b.value()[i];
                             pg[0][i] = c * d;
                             pg[1][i] = -c * d;
                         }
                     });
}

Var cross_entropy(const Var& logits, std::size_t target) {
    const Tensor& z = logits.value();
    if (z.ndim() != 2 || z.cols() != 1) {
        throw DimensionError("cross_entropy: expected a K x 1 logit column, got " + shape_str(z.shape()));
    }
    if (target >= z.rows()) {
        throw ContractError("cross_entropy: target " + std::to_string(target) + " out of range [0," +
                            std::to_string(z.rows()) + ")");
    }
    Tensor prob = softmax_tensor(z, 0);
    double mx = -std::numeric_limits<double>::infinity();
    for (double x : z.data()) mx = std::max(mx, x);
    double lse = 0.0;
    for (double x : z.data()) lse += std::exp(x - mx);
    const double loss = (mx - z[target]) + std::log(lse);
    return make_node(Tensor::scalar(loss), {logits},
                     [prob = std::move(prob), target](const Tensor& g, std::span<Tensor> pg) {
                         for (std::size_t k = 0; k < prob.numel(); ++k)
                             pg[0][k] = g[0] * (prob[k] - (k == target ? 1.0 : 0.0));
                     });
}

}  // namespace aarr::ad
