#pragma once

#include <cstdint>
#include <deque>
#include <span>
#include <string>
#include <vector>

#include "trsoc/common.hpp"

namespace trsoc {

// Trainable parameter block (row-major). Gradients accumulate across backward
// passes until zero_grad().
struct Param {
    std::string name;
    int rows = 0, cols = 0;
    std::vector<double> value, grad;

    Param() = default;
    Param(std::string n, int r, int c)
        : name(std::move(n)), rows(r), cols(c), value(static_cast<size_t>(r) * c, 0.0),
          grad(static_cast<size_t>(r) * c, 0.0) {}

    std::size_t size() const { return value.size(); }
    void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
};

// Row-major dense kernels, shared by the tape and the tape-free net forward.
// matmul_nn: C (RxN) = A (RxK) * B (KxN), optionally accumulating into C.
// matmul_nt: C (RxN) = A (RxK) * B^T with B stored as N x K.
void matmul_nn(const double* a, const double* b, double* c, int R, int K, int N, bool accumulate);
void matmul_nt(const double* a, const double* b, double* c, int R, int K, int N);

// Reverse-mode tape over dense row-major matrices of doubles. One Tape instance
// per loss evaluation; node ids are indices into the tape. The op set is the
// minimal closure needed by the trust-region losses: dense affine layers, GELU,
// elementwise arithmetic, per-row reductions, batch statistics, and the
// tile/block-sum pair used to broadcast per-time features across a batch.
class Tape {
public:
    Tape() = default;

    // --- leaves ---------------------------------------------------------
    int constant(int rows, int cols, std::span<const double> data);
    int constant(int rows, int cols, std::vector<double>&& data);
    int constant_scalar(double v);
    // Leaf bound to a Param; backward accumulates into p.grad.
    int param(Param& p);

    // --- forward ops ------------------------------------------------------
    // y = x * W^T + b, with x: R x K, W: N x K, b: 1 x N.
    int affine(int x, int w, int b);
    int gelu(int x);
    int add(int a, int b);
    int sub(int a, int b);
    int mul(int a, int b);            // elementwise, same shape
    int mul_rows(int a, int s);       // a: R x C, s: R x 1, broadcast over columns
    int scale(int x, double c);
    int add_scalar(int x, double c);
    int concat_cols(int a, int b);
    int row_sqnorm(int x);            // R x C -> R x 1, sum of squares per row
    int row_dot(int a, int b);        // R x C pair -> R x 1
    int sum(int x);                   // -> 1 x 1
    int mean_all(int x);              // -> 1 x 1
    // Population variance over the rows of an R x 1 column -> 1 x 1.
    int variance_rows(int x);
    // Weighted population variance with fixed nonnegative weights summing to 1.
    int weighted_variance_rows(int x, std::span<const double> w);
    // Weighted mean over rows of an R x 1 column with fixed weights.
    int weighted_mean_rows(int x, std::span<const double> w);
    // x: J x C -> (J*B) x C where row j*B+k copies row j.
    int tile_rows(int x, int copies);
    // x: (J*B) x C -> B x C, summing the J block rows that share k.
    int block_sum_rows(int x, int blocks);

    // --- access ----------------------------------------------------------
    int rows(int id) const { return nodes_[id].rows; }
    int cols(int id) const { return nodes_[id].cols; }
    std::span<const double> value(int id) const { return nodes_[id].val; }
    std::span<const double> gradient(int id) const { return nodes_[id].grad; }
    double scalar_value(int id) const;

    // Reverse accumulation from a scalar node. Deterministic: plain reverse
    // topological order over the tape.
    void backward(int loss_id);

    // Rewinds the tape for the next evaluation while keeping node storage, so
    // graphs with a fixed shape (training steps) avoid reallocation.
    void reset() { live_ = 0; }

    std::size_t size() const { return live_; }

private:
    enum class Op : std::uint8_t {
        Constant, Leaf, Affine, Gelu, Add, Sub, Mul, MulRows, Scale, AddScalar,
        ConcatCols, RowSqNorm, RowDot, Sum, MeanAll, VarRows, WVarRows, WMeanRows,
        TileRows, BlockSumRows,
    };

    struct Node {
        Op op;
        int a = -1, b = -1, c = -1;
        int rows = 0, cols = 0;
        int blocks = 0;          // TileRows / BlockSumRows
        double cval = 0.0;       // Scale / AddScalar
        Param* bound = nullptr;  // Leaf
        std::vector<double> val, grad;
        std::vector<double> aux;  // op-specific cache (e.g. GELU cdf, weights)
    };

    int push(Op op, int rows, int cols, int a = -1, int b = -1, int c = -1);
    void check_same_shape(int a, int b, const char* what) const;

    std::deque<Node> nodes_;
    std::size_t live_ = 0;
};

}  // namespace trsoc
