#include "trsoc/net.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

namespace trsoc {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;
constexpr std::uint64_t kCheckpointMagic = 0x54525f534f434e45ULL;  // "TR_SOCNE"
constexpr std::uint32_t kCheckpointVersion = 1;

void gelu_inplace(double* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        const double phi = 0.5 * (1.0 + std::erf(x[i] * 0.70710678118654752440));
        x[i] = x[i] * phi;
    }
}

}  // namespace

ControlNet::ControlNet(NetConfig cfg, std::uint64_t init_seed) : cfg_(cfg) {
    require(cfg_.dim >= 1 && cfg_.layers >= 2 && cfg_.width >= 1 && cfg_.fourier >= 1,
            "ControlNet: invalid architecture");
    RandomStream rs(init_seed, 0x6e6574);  // dedicated init stream
    auto build = [&](std::vector<Param>& ws, std::vector<Param>& bs, int in_dim, int out_dim,
                     const std::string& tag) {
        for (int l = 0; l < cfg_.layers; ++l) {
            const int fan_in = (l == 0) ? in_dim : cfg_.width;
            const int fan_out = (l == cfg_.layers - 1) ? out_dim : cfg_.width;
            Param w(tag + ".w" + std::to_string(l), fan_out, fan_in);
            Param b(tag + ".b" + std::to_string(l), 1, fan_out);
            if (l < cfg_.layers - 1) {
                const double s = std::sqrt(2.0 / fan_in);
                for (auto& v : w.value) v = s * rs.normal();
            }
            // final layer stays zero so u_theta(.,.) == 0 at initialization
            ws.push_back(std::move(w));
            bs.push_back(std::move(b));
        }
    };
    build(trunk_w_, trunk_b_, cfg_.dim + cfg_.feature_dim(), cfg_.dim, "trunk");
    build(gate_w_, gate_b_, cfg_.feature_dim(), 1, "gate");
}

std::vector<double> ControlNet::fourier_features(double t) const {
    std::vector<double> f(cfg_.feature_dim());
    f[0] = t;
    for (int k = 1; k <= cfg_.fourier; ++k) {
        const double a = kTwoPi * k * t / cfg_.horizon;
        f[2 * k - 1] = std::cos(a);
        f[2 * k] = std::sin(a);
    }
    return f;
}

void ControlNet::raw_mlp(const std::vector<Param>& ws, const std::vector<Param>& bs, const double* in,
                         int rows, int in_dim, double* out, int out_dim) const {
    std::vector<double> cur(in, in + static_cast<std::size_t>(rows) * in_dim);
    int cur_dim = in_dim;
    std::vector<double> next;
    for (std::size_t l = 0; l < ws.size(); ++l) {
        const Param& w = ws[l];
        const Param& b = bs[l];
        next.assign(static_cast<std::size_t>(rows) * w.rows, 0.0);
        matmul_nt(cur.data(), w.value.data(), next.data(), rows, cur_dim, w.rows);
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < w.rows; ++c) next[static_cast<std::size_t>(r) * w.rows + c] += b.value[c];
        if (l + 1 < ws.size()) gelu_inplace(next.data(), next.size());
        cur.swap(next);
        cur_dim = w.rows;
    }
    std::memcpy(out, cur.data(), sizeof(double) * static_cast<std::size_t>(rows) * out_dim);
}

void ControlNet::eval(std::span<const double> x, int count, double t, std::span<double> out) const {
    const int d = cfg_.dim;
    const std::vector<double> phi = fourier_features(t);
    // trunk input: [x, phi] tiled per row
    const int fin = d + cfg_.feature_dim();
    std::vector<double> in(static_cast<std::size_t>(count) * fin);
    for (int k = 0; k < count; ++k) {
        std::memcpy(in.data() + static_cast<std::size_t>(k) * fin, x.data() + static_cast<std::size_t>(k) * d,
                    sizeof(double) * d);
        std::memcpy(in.data() + static_cast<std::size_t>(k) * fin + d, phi.data(),
                    sizeof(double) * cfg_.feature_dim());
    }
    raw_mlp(trunk_w_, trunk_b_, in.data(), count, fin, out.data(), d);
    double gate = 0.0;
    raw_mlp(gate_w_, gate_b_, phi.data(), 1, cfg_.feature_dim(), &gate, 1);
    const double scale = gate / (cfg_.eta * cfg_.eta);
    for (int k = 0; k < count; ++k)
        for (int i = 0; i < d; ++i)
            out[static_cast<std::size_t>(k) * d + i] += scale * x[static_cast<std::size_t>(k) * d + i];
}

int ControlNet::forward(Tape& tape, int x_id, std::span<const double> times, int copies) {
    const int d = cfg_.dim;
    const int J = static_cast<int>(times.size());
    require(tape.rows(x_id) == J * copies && tape.cols(x_id) == d,
            "ControlNet::forward: states must be (len(times)*copies) x dim");
    const int F = cfg_.feature_dim();
    std::vector<double> phi(static_cast<std::size_t>(J) * F);
    for (int j = 0; j < J; ++j) {
        std::vector<double> f = fourier_features(times[j]);
        std::memcpy(phi.data() + static_cast<std::size_t>(j) * F, f.data(), sizeof(double) * F);
    }
    const int phi_id = tape.constant(J, F, std::move(phi));
    const int phi_tiled = tape.tile_rows(phi_id, copies);

    int h = tape.concat_cols(x_id, phi_tiled);
    for (int l = 0; l < cfg_.layers; ++l) {
        h = tape.affine(h, tape.param(trunk_w_[l]), tape.param(trunk_b_[l]));
        if (l + 1 < cfg_.layers) h = tape.gelu(h);
    }
    int g = phi_id;
    for (int l = 0; l < cfg_.layers; ++l) {
        g = tape.affine(g, tape.param(gate_w_[l]), tape.param(gate_b_[l]));
        if (l + 1 < cfg_.layers) g = tape.gelu(g);
    }
    const int gate_tiled = tape.tile_rows(g, copies);  // (J*copies) x 1
    const int x_scaled = tape.scale(x_id, 1.0 / (cfg_.eta * cfg_.eta));
    const int gate_term = tape.mul_rows(x_scaled, gate_tiled);
    return tape.add(h, gate_term);
}

std::vector<Param*> ControlNet::params() {
    std::vector<Param*> out;
    for (auto& p : trunk_w_) out.push_back(&p);
    for (auto& p : trunk_b_) out.push_back(&p);
    for (auto& p : gate_w_) out.push_back(&p);
    for (auto& p : gate_b_) out.push_back(&p);
    return out;
}

std::vector<double> ControlNet::flat_params() const {
    std::vector<double> out;
    auto self = const_cast<ControlNet*>(this);
    for (Param* p : self->params()) out.insert(out.end(), p->value.begin(), p->value.end());
    return out;
}

void ControlNet::set_flat_params(std::span<const double> v) {
    std::size_t off = 0;
    for (Param* p : params()) {
        require(off + p->size() <= v.size(), "ControlNet::set_flat_params: size mismatch");
        std::copy(v.begin() + off, v.begin() + off + p->size(), p->value.begin());
        off += p->size();
    }
    require(off == v.size(), "ControlNet::set_flat_params: size mismatch");
}

std::size_t ControlNet::param_count() const {
    std::size_t n = 0;
    auto self = const_cast<ControlNet*>(this);
    for (Param* p : self->params()) n += p->size();
    return n;
}

void ControlNet::zero_grad() {
    for (Param* p : params()) p->zero_grad();
}

void ControlNet::scale_gate_output(double factor) {
    for (auto& v : gate_w_.back().value) v *= factor;
    for (auto& v : gate_b_.back().value) v *= factor;
}

void ControlNet::scale_output(double factor) {
    for (auto& v : trunk_w_.back().value) v *= factor;
    for (auto& v : trunk_b_.back().value) v *= factor;
    scale_gate_output(factor);
}

void ControlNet::scale_all(double factor) {
    for (Param* p : params())
        for (auto& v : p->value) v *= factor;
}

void ControlNet::save_checkpoint(const std::string& path, std::uint64_t seed) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) fail_runtime("save_checkpoint: cannot open ", path);
    auto put = [&](const void* p, std::size_t n) { os.write(static_cast<const char*>(p), n); };
    const std::uint64_t magic = kCheckpointMagic;
    const std::uint32_t version = kCheckpointVersion;
    put(&magic, 8);
    put(&version, 4);
    const std::int32_t arch[4] = {cfg_.dim, cfg_.layers, cfg_.width, cfg_.fourier};
    put(arch, sizeof(arch));
    put(&cfg_.eta, 8);
    put(&cfg_.horizon, 8);
    put(&seed, 8);
    const std::vector<double> flat = flat_params();
    const std::uint64_t n = flat.size();
    put(&n, 8);
    put(flat.data(), sizeof(double) * flat.size());
    if (!os) fail_runtime("save_checkpoint: write failed for ", path);
}

ControlNet ControlNet::load_checkpoint(const std::string& path, std::uint64_t* seed_out) {
    std::ifstream is(path, std::ios::binary);
    if (!is) fail_runtime("load_checkpoint: cannot open ", path);
    auto get = [&](void* p, std::size_t n) {
        is.read(static_cast<char*>(p), n);
        if (!is) fail_runtime("load_checkpoint: truncated file ", path);
    };
    std::uint64_t magic = 0;
    std::uint32_t version = 0;
    get(&magic, 8);
    get(&version, 4);
    if (magic != kCheckpointMagic || version != kCheckpointVersion)
        fail_runtime("load_checkpoint: unrecognized header in ", path);
    std::int32_t arch[4];
    get(arch, sizeof(arch));
    NetConfig cfg;
    cfg.dim = arch[0];
    cfg.layers = arch[1];
    cfg.width = arch[2];
    cfg.fourier = arch[3];
    get(&cfg.eta, 8);
    get(&cfg.horizon, 8);
    std::uint64_t seed = 0;
    get(&seed, 8);
    if (seed_out) *seed_out = seed;
    std::uint64_t n = 0;
    get(&n, 8);
    ControlNet net(cfg, seed);
    if (n != net.param_count())
        fail_runtime("load_checkpoint: parameter count ", n, " does not match architecture");
    std::vector<double> flat(n);
    get(flat.data(), sizeof(double) * n);
    net.set_flat_params(flat);
    return net;
}

}  // namespace trsoc
