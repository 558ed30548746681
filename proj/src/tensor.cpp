#include "trsoc/tensor.hpp"

#include <cmath>
#include <cstring>

namespace trsoc {

void matmul_nn(const double* a, const double* b, double* c, int R, int K, int N, bool accumulate) {
    auto body = [&](std::size_t r0, std::size_t r1) {
        for (std::size_t r = r0; r < r1; ++r) {
            const double* ar = a + r * K;
            double* cr = c + r * N;
            if (!accumulate) std::memset(cr, 0, sizeof(double) * N);
            for (int k = 0; k < K; ++k) {
                const double av = ar[k];
                const double* br = b + static_cast<std::size_t>(k) * N;
                for (int n = 0; n < N; ++n) cr[n] += av * br[n];
            }
        }
    };
    if (static_cast<std::size_t>(R) * K * N >= (1u << 21))
        parallel_for(R, body, 64);
    else
        body(0, R);
}

void matmul_nt(const double* a, const double* b, double* c, int R, int K, int N) {
    // transpose b once so the inner loop is a contiguous axpy (the dot-product
    // form defeats autovectorization under strict FP semantics)
    std::vector<double> bt(static_cast<std::size_t>(K) * N);
    for (int n = 0; n < N; ++n)
        for (int k = 0; k < K; ++k)
            bt[static_cast<std::size_t>(k) * N + n] = b[static_cast<std::size_t>(n) * K + k];
    matmul_nn(a, bt.data(), c, R, K, N, false);
}

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

// C (N x K) += A^T (N x R) * B (R x K) with A given as R x N.
void mm_tn_acc(const double* A, const double* B, double* C, int R, int N, int K) {
    for (int r = 0; r < R; ++r) {
        const double* a = A + static_cast<std::size_t>(r) * N;
        const double* b = B + static_cast<std::size_t>(r) * K;
        for (int n = 0; n < N; ++n) {
            const double av = a[n];
            double* c = C + static_cast<std::size_t>(n) * K;
            for (int k = 0; k < K; ++k) c[k] += av * b[k];
        }
    }
}

}  // namespace

int Tape::push(Op op, int rows, int cols, int a, int b, int c) {
    if (live_ == nodes_.size()) nodes_.emplace_back();
    Node& n = nodes_[live_];
    n.op = op;
    n.a = a;
    n.b = b;
    n.c = c;
    n.rows = rows;
    n.cols = cols;
    n.blocks = 0;
    n.cval = 0.0;
    n.bound = nullptr;
    n.val.resize(static_cast<std::size_t>(rows) * cols);  // every op overwrites its output
    n.aux.clear();
    return static_cast<int>(live_++);
}

void Tape::check_same_shape(int a, int b, const char* what) const {
    if (nodes_[a].rows != nodes_[b].rows || nodes_[a].cols != nodes_[b].cols)
        fail_contract("tape ", what, ": shape mismatch (", nodes_[a].rows, "x", nodes_[a].cols,
                      " vs ", nodes_[b].rows, "x", nodes_[b].cols, ")");
}

int Tape::constant(int rows, int cols, std::span<const double> data) {
    if (static_cast<std::size_t>(rows) * cols != data.size())
        fail_contract("tape constant: data size ", data.size(), " != ", rows, "x", cols);
    int id = push(Op::Constant, rows, cols);
    std::copy(data.begin(), data.end(), nodes_[id].val.begin());
    return id;
}

int Tape::constant(int rows, int cols, std::vector<double>&& data) {
    // same path as the copying overload: reusing tape storage beats moving
    return constant(rows, cols, std::span<const double>(data.data(), data.size()));
}

int Tape::constant_scalar(double v) {
    int id = push(Op::Constant, 1, 1);
    nodes_[id].val[0] = v;
    return id;
}

int Tape::param(Param& p) {
    int id = push(Op::Leaf, p.rows, p.cols);
    nodes_[id].bound = &p;
    std::copy(p.value.begin(), p.value.end(), nodes_[id].val.begin());
    return id;
}

int Tape::affine(int x, int w, int b) {
    const Node& xn = nodes_[x];
    const Node& wn = nodes_[w];
    const Node& bn = nodes_[b];
    if (xn.cols != wn.cols)
        fail_contract("tape affine: input cols ", xn.cols, " != weight cols ", wn.cols);
    if (bn.rows != 1 || bn.cols != wn.rows)
        fail_contract("tape affine: bias must be 1x", wn.rows, ", got ", bn.rows, "x", bn.cols);
    const int R = xn.rows, K = xn.cols, N = wn.rows;
    int id = push(Op::Affine, R, N, x, w, b);
    matmul_nt(nodes_[x].val.data(), nodes_[w].val.data(), nodes_[id].val.data(), R, K, N);
    double* y = nodes_[id].val.data();
    const double* bias = nodes_[b].val.data();
    for (int r = 0; r < R; ++r)
        for (int n = 0; n < N; ++n) y[static_cast<std::size_t>(r) * N + n] += bias[n];
    return id;
}

int Tape::gelu(int x) {
    const Node& xn = nodes_[x];
    int id = push(Op::Gelu, xn.rows, xn.cols, x);
    Node& n = nodes_[id];
    const std::size_t sz = xn.val.size();
    n.aux.resize(2 * sz);  // cache Phi(x) and the gaussian pdf for backward
    const double* xv = nodes_[x].val.data();
    double* yv = n.val.data();
    double* cdf = n.aux.data();
    double* pdf = n.aux.data() + sz;
    parallel_for(sz, [&](std::size_t i0, std::size_t i1) {
        for (std::size_t i = i0; i < i1; ++i) {
            const double phi = 0.5 * (1.0 + std::erf(xv[i] * kInvSqrt2));
            cdf[i] = phi;
            pdf[i] = kInvSqrt2Pi * std::exp(-0.5 * xv[i] * xv[i]);
            yv[i] = xv[i] * phi;
        }
    }, 1 << 15);
    return id;
}

int Tape::add(int a, int b) {
    check_same_shape(a, b, "add");
    int id = push(Op::Add, nodes_[a].rows, nodes_[a].cols, a, b);
    const double* av = nodes_[a].val.data();
    const double* bv = nodes_[b].val.data();
    double* y = nodes_[id].val.data();
    for (std::size_t i = 0; i < nodes_[id].val.size(); ++i) y[i] = av[i] + bv[i];
    return id;
}

int Tape::sub(int a, int b) {
    check_same_shape(a, b, "sub");
    int id = push(Op::Sub, nodes_[a].rows, nodes_[a].cols, a, b);
    const double* av = nodes_[a].val.data();
    const double* bv = nodes_[b].val.data();
    double* y = nodes_[id].val.data();
    for (std::size_t i = 0; i < nodes_[id].val.size(); ++i) y[i] = av[i] - bv[i];
    return id;
}

int Tape::mul(int a, int b) {
    check_same_shape(a, b, "mul");
    int id = push(Op::Mul, nodes_[a].rows, nodes_[a].cols, a, b);
    const double* av = nodes_[a].val.data();
    const double* bv = nodes_[b].val.data();
    double* y = nodes_[id].val.data();
    for (std::size_t i = 0; i < nodes_[id].val.size(); ++i) y[i] = av[i] * bv[i];
    return id;
}

int Tape::mul_rows(int a, int s) {
    const Node& an = nodes_[a];
    const Node& sn = nodes_[s];
    if (sn.rows != an.rows || sn.cols != 1)
        fail_contract("tape mul_rows: scale must be ", an.rows, "x1, got ", sn.rows, "x", sn.cols);
    int id = push(Op::MulRows, an.rows, an.cols, a, s);
    const double* av = nodes_[a].val.data();
    const double* sv = nodes_[s].val.data();
    double* y = nodes_[id].val.data();
    for (int r = 0; r < an.rows; ++r)
        for (int c = 0; c < an.cols; ++c)
            y[static_cast<std::size_t>(r) * an.cols + c] = av[static_cast<std::size_t>(r) * an.cols + c] * sv[r];
    return id;
}

int Tape::scale(int x, double c) {
    int id = push(Op::Scale, nodes_[x].rows, nodes_[x].cols, x);
    nodes_[id].cval = c;
    const double* xv = nodes_[x].val.data();
    double* y = nodes_[id].val.data();
    for (std::size_t i = 0; i < nodes_[id].val.size(); ++i) y[i] = c * xv[i];
    return id;
}

int Tape::add_scalar(int x, double c) {
    int id = push(Op::AddScalar, nodes_[x].rows, nodes_[x].cols, x);
    nodes_[id].cval = c;
    const double* xv = nodes_[x].val.data();
    double* y = nodes_[id].val.data();
    for (std::size_t i = 0; i < nodes_[id].val.size(); ++i) y[i] = xv[i] + c;
    return id;
}

int Tape::concat_cols(int a, int b) {
    const Node& an = nodes_[a];
    const Node& bn = nodes_[b];
    if (an.rows != bn.rows)
        fail_contract("tape concat_cols: row mismatch ", an.rows, " vs ", bn.rows);
    int id = push(Op::ConcatCols, an.rows, an.cols + bn.cols, a, b);
    const double* av = nodes_[a].val.data();
    const double* bv = nodes_[b].val.data();
    double* y = nodes_[id].val.data();
    const int ac = an.cols, bc = bn.cols, C = ac + bc;
    for (int r = 0; r < an.rows; ++r) {
        std::memcpy(y + static_cast<std::size_t>(r) * C, av + static_cast<std::size_t>(r) * ac, sizeof(double) * ac);
        std::memcpy(y + static_cast<std::size_t>(r) * C + ac, bv + static_cast<std::size_t>(r) * bc,
                    sizeof(double) * bc);
    }
    return id;
}

int Tape::row_sqnorm(int x) {
    const Node& xn = nodes_[x];
    int id = push(Op::RowSqNorm, xn.rows, 1, x);
    const double* xv = nodes_[x].val.data();
    double* y = nodes_[id].val.data();
    for (int r = 0; r < xn.rows; ++r) {
        double s = 0.0;
        const double* row = xv + static_cast<std::size_t>(r) * xn.cols;
        for (int c = 0; c < xn.cols; ++c) s += row[c] * row[c];
        y[r] = s;
    }
    return id;
}

int Tape::row_dot(int a, int b) {
    check_same_shape(a, b, "row_dot");
    const Node& an = nodes_[a];
    int id = push(Op::RowDot, an.rows, 1, a, b);
    const double* av = nodes_[a].val.data();
    const double* bv = nodes_[b].val.data();
    double* y = nodes_[id].val.data();
    for (int r = 0; r < an.rows; ++r) {
        double s = 0.0;
        const std::size_t off = static_cast<std::size_t>(r) * an.cols;
        for (int c = 0; c < an.cols; ++c) s += av[off + c] * bv[off + c];
        y[r] = s;
    }
    return id;
}

int Tape::sum(int x) {
    int id = push(Op::Sum, 1, 1, x);
    double s = 0.0;
    for (double v : nodes_[x].val) s += v;
    nodes_[id].val[0] = s;
    return id;
}

int Tape::mean_all(int x) {
    int id = push(Op::MeanAll, 1, 1, x);
    double s = 0.0;
    for (double v : nodes_[x].val) s += v;
    nodes_[id].val[0] = s / static_cast<double>(nodes_[x].val.size());
    return id;
}

int Tape::variance_rows(int x) {
    const Node& xn = nodes_[x];
    if (xn.cols != 1) fail_contract("tape variance_rows: expected Rx1 column, got ", xn.rows, "x", xn.cols);
    if (xn.rows < 2) fail_contract("tape variance_rows: need at least 2 rows, got ", xn.rows);
    int id = push(Op::VarRows, 1, 1, x);
    const double R = static_cast<double>(xn.rows);
    double m = 0.0;
    for (double v : nodes_[x].val) m += v;
    m /= R;
    double s = 0.0;
    for (double v : nodes_[x].val) s += (v - m) * (v - m);
    nodes_[id].val[0] = s / R;  // population convention
    nodes_[id].cval = m;
    return id;
}

int Tape::weighted_variance_rows(int x, std::span<const double> w) {
    const Node& xn = nodes_[x];
    if (xn.cols != 1) fail_contract("tape weighted_variance_rows: expected Rx1 column");
    if (w.size() != static_cast<std::size_t>(xn.rows))
        fail_contract("tape weighted_variance_rows: weight count ", w.size(), " != rows ", xn.rows);
    int id = push(Op::WVarRows, 1, 1, x);
    Node& n = nodes_[id];
    n.aux.assign(w.begin(), w.end());
    double m = 0.0;
    for (int r = 0; r < xn.rows; ++r) m += w[r] * nodes_[x].val[r];
    double s = 0.0;
    for (int r = 0; r < xn.rows; ++r) {
        const double d = nodes_[x].val[r] - m;
        s += w[r] * d * d;
    }
    n.val[0] = s;
    n.cval = m;
    return id;
}

int Tape::weighted_mean_rows(int x, std::span<const double> w) {
    const Node& xn = nodes_[x];
    if (xn.cols != 1) fail_contract("tape weighted_mean_rows: expected Rx1 column");
    if (w.size() != static_cast<std::size_t>(xn.rows))
        fail_contract("tape weighted_mean_rows: weight count ", w.size(), " != rows ", xn.rows);
    int id = push(Op::WMeanRows, 1, 1, x);
    Node& n = nodes_[id];
    n.aux.assign(w.begin(), w.end());
    double m = 0.0;
    for (int r = 0; r < xn.rows; ++r) m += w[r] * nodes_[x].val[r];
    n.val[0] = m;
    return id;
}

int Tape::tile_rows(int x, int copies) {
    const Node& xn = nodes_[x];
    require(copies >= 1, "tape tile_rows: copies must be >= 1");
    int id = push(Op::TileRows, xn.rows * copies, xn.cols, x);
    nodes_[id].blocks = copies;
    const double* xv = nodes_[x].val.data();
    double* y = nodes_[id].val.data();
    for (int j = 0; j < xn.rows; ++j)
        for (int k = 0; k < copies; ++k)
            std::memcpy(y + (static_cast<std::size_t>(j) * copies + k) * xn.cols,
                        xv + static_cast<std::size_t>(j) * xn.cols, sizeof(double) * xn.cols);
    return id;
}

int Tape::block_sum_rows(int x, int blocks) {
    const Node& xn = nodes_[x];
    require(blocks >= 1 && xn.rows % blocks == 0, "tape block_sum_rows: rows not divisible by blocks");
    const int B = xn.rows / blocks;
    int id = push(Op::BlockSumRows, B, xn.cols, x);
    nodes_[id].blocks = blocks;
    const double* xv = nodes_[x].val.data();
    double* y = nodes_[id].val.data();
    std::memset(y, 0, sizeof(double) * nodes_[id].val.size());
    for (int j = 0; j < blocks; ++j)
        for (int k = 0; k < B; ++k) {
            const double* src = xv + (static_cast<std::size_t>(j) * B + k) * xn.cols;
            double* dst = y + static_cast<std::size_t>(k) * xn.cols;
            for (int c = 0; c < xn.cols; ++c) dst[c] += src[c];
        }
    return id;
}

double Tape::scalar_value(int id) const {
    if (nodes_[id].val.size() != 1) fail_contract("tape scalar_value: node is not scalar");
    return nodes_[id].val[0];
}

void Tape::backward(int loss_id) {
    Node& loss = nodes_[loss_id];
    if (loss.val.size() != 1)
        fail_contract("tape backward: loss must be scalar, got ", loss.rows, "x", loss.cols);
    for (std::size_t i = 0; i < live_; ++i) {
        Node& n = nodes_[i];
        if (n.op == Op::Constant)
            n.grad.clear();  // constants never need gradients
        else
            n.grad.assign(n.val.size(), 0.0);
    }
    loss.grad[0] = 1.0;

    for (int id = loss_id; id >= 0; --id) {
        Node& n = nodes_[id];
        if (n.grad.empty()) continue;
        bool any = false;
        for (double g : n.grad)
            if (g != 0.0) { any = true; break; }
        if (!any && n.op != Op::Leaf) continue;
        const double* gy = n.grad.data();
        switch (n.op) {
            case Op::Constant:
                break;
            case Op::Leaf:
                if (n.bound) {
                    for (std::size_t i = 0; i < n.grad.size(); ++i) n.bound->grad[i] += n.grad[i];
                }
                break;
            case Op::Affine: {
                Node& xn = nodes_[n.a];
                Node& wn = nodes_[n.b];
                Node& bn = nodes_[n.c];
                const int R = xn.rows, K = xn.cols, N = wn.rows;
                if (!xn.grad.empty()) matmul_nn(gy, wn.val.data(), xn.grad.data(), R, N, K, true);
                if (!wn.grad.empty()) mm_tn_acc(gy, xn.val.data(), wn.grad.data(), R, N, K);
                if (!bn.grad.empty())
                    for (int r = 0; r < R; ++r)
                        for (int c = 0; c < N; ++c) bn.grad[c] += gy[static_cast<std::size_t>(r) * N + c];
                break;
            }
            case Op::Gelu: {
                Node& xn = nodes_[n.a];
                if (xn.grad.empty()) break;
                const double* xv = xn.val.data();
                const double* cdf = n.aux.data();
                const double* pdf = n.aux.data() + n.val.size();
                double* gx = xn.grad.data();
                for (std::size_t i = 0; i < n.val.size(); ++i)
                    gx[i] += gy[i] * (cdf[i] + xv[i] * pdf[i]);
                break;
            }
            case Op::Add: {
                if (!nodes_[n.a].grad.empty()) {
                    double* ga = nodes_[n.a].grad.data();
                    for (std::size_t i = 0; i < n.val.size(); ++i) ga[i] += gy[i];
                }
                if (!nodes_[n.b].grad.empty()) {
                    double* gb = nodes_[n.b].grad.data();
                    for (std::size_t i = 0; i < n.val.size(); ++i) gb[i] += gy[i];
                }
                break;
            }
            case Op::Sub: {
                if (!nodes_[n.a].grad.empty()) {
                    double* ga = nodes_[n.a].grad.data();
                    for (std::size_t i = 0; i < n.val.size(); ++i) ga[i] += gy[i];
                }
                if (!nodes_[n.b].grad.empty()) {
                    double* gb = nodes_[n.b].grad.data();
                    for (std::size_t i = 0; i < n.val.size(); ++i) gb[i] -= gy[i];
                }
                break;
            }
            case Op::Mul: {
                // n.a == n.b (squaring) accumulates both halves correctly.
                const double* av = nodes_[n.a].val.data();
                const double* bv = nodes_[n.b].val.data();
                if (!nodes_[n.a].grad.empty())
                    for (std::size_t i = 0; i < n.val.size(); ++i) nodes_[n.a].grad[i] += gy[i] * bv[i];
                if (!nodes_[n.b].grad.empty())
                    for (std::size_t i = 0; i < n.val.size(); ++i) nodes_[n.b].grad[i] += gy[i] * av[i];
                break;
            }
            case Op::MulRows: {
                Node& an = nodes_[n.a];
                Node& sn = nodes_[n.b];
                const double* av = an.val.data();
                const double* sv = sn.val.data();
                const bool ga = !an.grad.empty(), gs = !sn.grad.empty();
                for (int r = 0; r < an.rows; ++r) {
                    double acc = 0.0;
                    const std::size_t off = static_cast<std::size_t>(r) * an.cols;
                    for (int c = 0; c < an.cols; ++c) {
                        if (ga) an.grad[off + c] += gy[off + c] * sv[r];
                        acc += gy[off + c] * av[off + c];
                    }
                    if (gs) sn.grad[r] += acc;
                }
                break;
            }
            case Op::Scale: {
                if (nodes_[n.a].grad.empty()) break;
                double* gx = nodes_[n.a].grad.data();
                for (std::size_t i = 0; i < n.val.size(); ++i) gx[i] += n.cval * gy[i];
                break;
            }
            case Op::AddScalar: {
                if (nodes_[n.a].grad.empty()) break;
                double* gx = nodes_[n.a].grad.data();
                for (std::size_t i = 0; i < n.val.size(); ++i) gx[i] += gy[i];
                break;
            }
            case Op::ConcatCols: {
                Node& an = nodes_[n.a];
                Node& bn = nodes_[n.b];
                const int ac = an.cols, bc = bn.cols, C = n.cols;
                const bool ga = !an.grad.empty(), gb = !bn.grad.empty();
                for (int r = 0; r < n.rows; ++r) {
                    const std::size_t off = static_cast<std::size_t>(r) * C;
                    if (ga)
                        for (int c = 0; c < ac; ++c)
                            an.grad[static_cast<std::size_t>(r) * ac + c] += gy[off + c];
                    if (gb)
                        for (int c = 0; c < bc; ++c)
                            bn.grad[static_cast<std::size_t>(r) * bc + c] += gy[off + ac + c];
                }
                break;
            }
            case Op::RowSqNorm: {
                Node& xn = nodes_[n.a];
                if (xn.grad.empty()) break;
                const double* xv = xn.val.data();
                for (int r = 0; r < xn.rows; ++r) {
                    const std::size_t off = static_cast<std::size_t>(r) * xn.cols;
                    for (int c = 0; c < xn.cols; ++c) xn.grad[off + c] += 2.0 * xv[off + c] * gy[r];
                }
                break;
            }
            case Op::RowDot: {
                Node& an = nodes_[n.a];
                Node& bn = nodes_[n.b];
                const double* av = an.val.data();
                const double* bv = bn.val.data();
                const bool ga = !an.grad.empty(), gb = !bn.grad.empty();
                for (int r = 0; r < an.rows; ++r) {
                    const std::size_t off = static_cast<std::size_t>(r) * an.cols;
                    for (int c = 0; c < an.cols; ++c) {
                        if (ga) an.grad[off + c] += bv[off + c] * gy[r];
                        if (gb) bn.grad[off + c] += av[off + c] * gy[r];
                    }
                }
                break;
            }
            case Op::Sum: {
                if (nodes_[n.a].grad.empty()) break;
                double* gx = nodes_[n.a].grad.data();
                for (std::size_t i = 0; i < nodes_[n.a].val.size(); ++i) gx[i] += gy[0];
                break;
            }
            case Op::MeanAll: {
                if (nodes_[n.a].grad.empty()) break;
                double* gx = nodes_[n.a].grad.data();
                const double inv = 1.0 / static_cast<double>(nodes_[n.a].val.size());
                for (std::size_t i = 0; i < nodes_[n.a].val.size(); ++i) gx[i] += gy[0] * inv;
                break;
            }
            case Op::VarRows: {
                Node& xn = nodes_[n.a];
                if (xn.grad.empty()) break;
                const double inv = 2.0 / static_cast<double>(xn.rows);
                for (int r = 0; r < xn.rows; ++r)
                    xn.grad[r] += gy[0] * inv * (xn.val[r] - n.cval);
                break;
            }
            case Op::WVarRows: {
                Node& xn = nodes_[n.a];
                if (xn.grad.empty()) break;
                for (int r = 0; r < xn.rows; ++r)
                    xn.grad[r] += gy[0] * 2.0 * n.aux[r] * (xn.val[r] - n.cval);
                break;
            }
            case Op::WMeanRows: {
                Node& xn = nodes_[n.a];
                if (xn.grad.empty()) break;
                for (int r = 0; r < xn.rows; ++r) xn.grad[r] += gy[0] * n.aux[r];
                break;
            }
            case Op::TileRows: {
                Node& xn = nodes_[n.a];
                if (xn.grad.empty()) break;
                const int copies = n.blocks;
                for (int j = 0; j < xn.rows; ++j) {
                    double* gx = xn.grad.data() + static_cast<std::size_t>(j) * xn.cols;
                    for (int k = 0; k < copies; ++k) {
                        const double* src = gy + (static_cast<std::size_t>(j) * copies + k) * xn.cols;
                        for (int c = 0; c < xn.cols; ++c) gx[c] += src[c];
                    }
                }
                break;
            }
            case Op::BlockSumRows: {
                Node& xn = nodes_[n.a];
                if (xn.grad.empty()) break;
                const int B = n.rows;
                for (int j = 0; j < n.blocks; ++j)
                    for (int k = 0; k < B; ++k) {
                        double* gx = xn.grad.data() + (static_cast<std::size_t>(j) * B + k) * xn.cols;
                        const double* src = gy + static_cast<std::size_t>(k) * xn.cols;
                        for (int c = 0; c < xn.cols; ++c) gx[c] += src[c];
                    }
                break;
            }
        }
    }
}

}  // namespace trsoc
