#include "sdshrink/montecarlo.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/QR>
#include <Eigen/SVD>

namespace sdshrink {

void SimConfig::validate() const {
    model.validate();
    if (n < 1 || p < 1) throw ConfigError("simulation sizes n and p must be positive");
    if (n_replicates < 1) throw ConfigError("n_replicates must be positive");
    if (static_cast<std::size_t>(p) <= model.s()) throw ConfigError("p must exceed the number of spikes");
    if (entry_dist == EntryDist::StudentT && !(t_df > 8.0))
        throw ConfigError("student_t entries need df > 8 for the moment condition");
    if (directions) {
        const auto& V = *directions;
        if (V.rows() != p || V.cols() != static_cast<Eigen::Index>(model.s()))
            throw ConfigError("spike directions must be a p x s matrix");
        const Eigen::MatrixXd G = V.transpose() * V;
        if (!G.isIdentity(1e-8)) throw ConfigError("spike directions must be orthonormal");
    }
}

bool SimConfig::aspect_mismatch() const {
    return std::abs(static_cast<double>(p) / n - model.c) > 0.01;
}

std::mt19937_64 keyed_rng(std::uint64_t seed, std::uint64_t replicate, std::uint64_t role, std::uint64_t client) {
    auto lo = [](std::uint64_t v) { return static_cast<std::uint32_t>(v & 0xffffffffu); };
    auto hi = [](std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); };
    std::seed_seq seq{lo(seed), hi(seed), lo(replicate), hi(replicate), lo(role), lo(client), hi(client)};
    return std::mt19937_64(seq);
}

namespace {

Eigen::MatrixXd gaussian_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols) {
    std::normal_distribution<double> N(0.0, 1.0);
    Eigen::MatrixXd M(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) M(i, j) = N(rng);
    return M;
}

Eigen::MatrixXd entries(std::mt19937_64& rng, const SimConfig& cfg) {
    switch (cfg.entry_dist) {
        case EntryDist::Gaussian:
            return gaussian_matrix(rng, cfg.n, cfg.p);
        case EntryDist::Rademacher: {
            std::bernoulli_distribution B(0.5);
            Eigen::MatrixXd M(cfg.n, cfg.p);
            for (Eigen::Index j = 0; j < M.cols(); ++j)
                for (Eigen::Index i = 0; i < M.rows(); ++i) M(i, j) = B(rng) ? 1.0 : -1.0;
            return M;
        }
        case EntryDist::StudentT: {
            std::student_t_distribution<double> T(cfg.t_df);
            const double scale = std::sqrt((cfg.t_df - 2.0) / cfg.t_df);
            Eigen::MatrixXd M(cfg.n, cfg.p);
            for (Eigen::Index j = 0; j < M.cols(); ++j)
                for (Eigen::Index i = 0; i < M.rows(); ++i) M(i, j) = scale * T(rng);
            return M;
        }
    }
    return {};
}

constexpr std::uint64_t kRoleProblem = 0, kRoleData = 1;

}  // namespace

Problem draw_problem(const SimConfig& cfg, int replicate) {
    const auto& m = cfg.model;
    const Eigen::Index p = cfg.p, s = static_cast<Eigen::Index>(m.s());
    auto rng = keyed_rng(cfg.seed, static_cast<std::uint64_t>(replicate), kRoleProblem);
    Problem pb;
    if (cfg.directions) {
        pb.V = *cfg.directions;
    } else {
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(gaussian_matrix(rng, p, s));
        pb.V = qr.householderQ() * Eigen::MatrixXd::Identity(p, s);
    }
    Eigen::VectorXd u = gaussian_matrix(rng, p, 1).col(0);
    if (s > 0) u -= pb.V * (pb.V.transpose() * u);
    u /= u.norm();
    double rest = m.r * m.r;
    pb.beta0 = Eigen::VectorXd::Zero(p);
    for (Eigen::Index j = 0; j < s; ++j) {
        pb.beta0 += m.spikes[static_cast<std::size_t>(j)].alpha * pb.V.col(j);
        rest -= m.spikes[static_cast<std::size_t>(j)].alpha * m.spikes[static_cast<std::size_t>(j)].alpha;
    }
    pb.beta0 += std::sqrt(rest) * u;
    return pb;
}

Dataset draw_dataset(const SimConfig& cfg, const Problem& pb, int replicate, int client) {
    const auto& m = cfg.model;
    auto rng = keyed_rng(cfg.seed, static_cast<std::uint64_t>(replicate), kRoleData, static_cast<std::uint64_t>(client));
    const Eigen::MatrixXd Z = entries(rng, cfg);
    const double s0 = std::sqrt(m.sigma0_sq);
    Dataset ds;
    ds.X = s0 * Z;
    if (m.s() > 0) {
        Eigen::VectorXd scale(static_cast<Eigen::Index>(m.s()));
        for (std::size_t j = 0; j < m.s(); ++j)
            scale[static_cast<Eigen::Index>(j)] = std::sqrt(m.spikes[j].delta + m.sigma0_sq) - s0;
        ds.X.noalias() += (Z * pb.V) * scale.asDiagonal() * pb.V.transpose();
    }
    std::normal_distribution<double> N(0.0, std::sqrt(m.sigma_eps_sq));
    ds.y = ds.X * pb.beta0;
    for (Eigen::Index i = 0; i < ds.y.size(); ++i) ds.y[i] += N(rng);
    return ds;
}

GeneratedData gen_data(const SimConfig& cfg, int replicate) {
    cfg.validate();
    auto pb = draw_problem(cfg, replicate);
    auto ds = draw_dataset(cfg, pb, replicate);
    return {std::move(ds.X), std::move(ds.y), std::move(pb.beta0), std::move(pb.V)};
}

Eigen::VectorXd SpectralDecomp::apply(const Eigen::VectorXd& mult) const {
    return U * mult.cwiseProduct(z);
}

Eigen::VectorXd SpectralDecomp::apply_fn(const ShrinkageFn& f, const Eigen::VectorXd& v) const {
    const Eigen::VectorXd c = U.transpose() * v;
    Eigen::VectorXd fd(d.size());
    for (Eigen::Index i = 0; i < d.size(); ++i) fd[i] = f(d[i]);
    Eigen::VectorXd out = U * fd.cwiseProduct(c);
    if (U.cols() < p) out += f(0.0) * (v - U * c);
    return out;
}

SpectralDecomp decompose(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
    SpectralDecomp sd;
    sd.n = static_cast<int>(X.rows());
    sd.p = static_cast<int>(X.cols());
    const double n = static_cast<double>(X.rows());
    if (X.cols() <= X.rows()) {
        Eigen::MatrixXd S(X.cols(), X.cols());
        S.setZero();
        S.selfadjointView<Eigen::Lower>().rankUpdate(X.transpose(), 1.0 / n);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
        if (es.info() != Eigen::Success) throw NumericalError("sample covariance eigendecomposition failed");
        sd.d = es.eigenvalues().reverse();
        sd.U = es.eigenvectors().rowwise().reverse();
        sd.z = sd.U.transpose() * (X.transpose() * y / n);
        return sd;
    }
    Eigen::MatrixXd G(X.rows(), X.rows());
    G.setZero();
    G.selfadjointView<Eigen::Lower>().rankUpdate(X, 1.0 / n);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G);
    if (es.info() != Eigen::Success) throw NumericalError("Gram eigendecomposition failed");
    Eigen::VectorXd d = es.eigenvalues().reverse();
    Eigen::MatrixXd W = es.eigenvectors().rowwise().reverse();
    Eigen::Index rank = 0;
    const double cut = 1e-12 * std::max(d[0], 0.0);
    while (rank < d.size() && d[rank] > cut) ++rank;
    sd.d = d.head(rank);
    const Eigen::ArrayXd root = sd.d.array().sqrt();
    sd.U = X.transpose() * W.leftCols(rank) * (1.0 / (root * std::sqrt(n))).matrix().asDiagonal();
    sd.z = (root / std::sqrt(n)).matrix().cwiseProduct(W.leftCols(rank).transpose() * y);
    return sd;
}

double pinv_tolerance(const SpectralDecomp& sd) { return 1e-10 * sd.d_max(); }

FittedEstimator fit_shrinkage(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const ShrinkageFn& f) {
    const auto sd = decompose(X, y);
    const double tol = pinv_tolerance(sd);
    Eigen::VectorXd mult(sd.d.size());
    for (Eigen::Index i = 0; i < mult.size(); ++i) mult[i] = eval_shrinkage(f, sd.d[i], tol);
    FittedEstimator out{sd.apply(mult), f.name()};
    if (!out.coefficients.allFinite()) throw NumericalError("fitted coefficients are not finite");
    return out;
}

FittedEstimator fit_sd(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const SDParams& params) {
    if (params.lambdas.empty() || params.xis.size() + 1 != params.lambdas.size())
        throw ConfigError("SD parameters need k+1 lambdas and k weights");
    const double n = static_cast<double>(X.rows());
    const Eigen::Index p = X.cols();
    Eigen::MatrixXd S(p, p);
    S.setZero();
    S.selfadjointView<Eigen::Lower>().rankUpdate(X.transpose(), 1.0 / n);
    S = S.selfadjointView<Eigen::Lower>();
    const Eigen::VectorXd b = X.transpose() * y / n;
    const double tol = 1e-10 * Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(S, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff();

    auto pinv_apply = [&](double lambda, const Eigen::VectorXd& v) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S + lambda * Eigen::MatrixXd::Identity(p, p));
        if (es.info() != Eigen::Success) throw NumericalError("pseudoinverse eigendecomposition failed");
        Eigen::VectorXd e = es.eigenvalues();
        for (Eigen::Index i = 0; i < e.size(); ++i) e[i] = (std::abs(e[i]) <= tol) ? 0.0 : 1.0 / e[i];
        return Eigen::VectorXd(es.eigenvectors() * e.cwiseProduct(es.eigenvectors().transpose() * v));
    };
    Eigen::VectorXd beta = pinv_apply(params.lambdas[0], b);
    for (std::size_t t = 1; t < params.lambdas.size(); ++t) {
        const double xi = params.xis[t - 1];
        beta = pinv_apply(params.lambdas[t], (1.0 - xi) * b + xi * (S * beta));
    }
    return {beta, "sd(" + std::to_string(params.steps()) + ")"};
}

FittedEstimator fit_pcr(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, int m) {
    const Eigen::Index rank = std::min(X.rows(), X.cols());
    if (m < 1 || m > rank) throw ConfigError("PCR needs 1 <= m <= min(n, p)");
    Eigen::BDCSVD<Eigen::MatrixXd> svd(X, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& s = svd.singularValues();
    Eigen::VectorXd coef = svd.matrixU().leftCols(m).transpose() * y;
    coef = coef.cwiseQuotient(s.head(m));
    return {svd.matrixV().leftCols(m) * coef, "pcr(" + std::to_string(m) + ")"};
}

FittedEstimator fit_minnorm(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(X);
    return {cod.solve(y), "min_norm"};
}

FittedEstimator fit_gd(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double eta, int T) {
    if (!(eta > 0.0) || T < 1) throw ConfigError("gradient descent needs eta > 0 and T >= 1");
    const double n = static_cast<double>(X.rows());
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(X.cols());
    for (int t = 0; t < T; ++t) beta += eta * (X.transpose() * (y - X * beta)) / n;
    return {beta, "gd"};
}

double sigma_risk(const Eigen::VectorXd& beta_hat, const Eigen::VectorXd& beta0, const SpikedModel& m,
                  const Eigen::MatrixXd& V) {
    if (beta_hat.size() != beta0.size() || V.rows() != beta0.size() ||
        V.cols() != static_cast<Eigen::Index>(m.s()))
        throw ConfigError("sigma_risk dimension mismatch");
    const Eigen::VectorXd d = beta_hat - beta0;
    double r = m.sigma0_sq * d.squaredNorm();
    for (std::size_t j = 0; j < m.s(); ++j) {
        const double proj = V.col(static_cast<Eigen::Index>(j)).dot(d);
        r += m.spikes[j].delta * proj * proj;
    }
    return r;
}

FittedEstimator fit_aggregated(const std::vector<Dataset>& clients, const std::vector<ShrinkageFn>& rules,
                               const std::vector<double>& rhos) {
    if (clients.empty() || clients.size() != rules.size() || rules.size() != rhos.size())
        throw ConfigError("fit_aggregated needs one rule and weight per client");
    const Eigen::Index p = clients[0].X.cols();
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
    for (std::size_t l = 0; l < clients.size(); ++l) {
        if (clients[l].X.cols() != p) throw ConfigError("clients disagree on p");
        beta += rhos[l] * fit_shrinkage(clients[l].X, clients[l].y, rules[l]).coefficients;
    }
    return {beta, "aggregated"};
}

SpectralEstimator shrinkage_estimator(std::string name, const ShrinkageFn& f, double limit) {
    return {std::move(name),
            [f](const SpectralDecomp& sd) {
                const double tol = pinv_tolerance(sd);
                Eigen::VectorXd m(sd.d.size());
                for (Eigen::Index i = 0; i < m.size(); ++i) m[i] = eval_shrinkage(f, sd.d[i], tol);
                return m;
            },
            limit};
}

SpectralEstimator sd_estimator(std::string name, const SDParams& params, double limit) {
    return {std::move(name),
            [params](const SpectralDecomp& sd) {
                const double tol = pinv_tolerance(sd);
                Eigen::VectorXd m(sd.d.size());
                for (Eigen::Index i = 0; i < m.size(); ++i) m[i] = sd_recursion(params, sd.d[i], tol);
                return m;
            },
            limit};
}

SpectralEstimator pcr_estimator(std::string name, int m, double limit) {
    return {std::move(name),
            [m](const SpectralDecomp& sd) {
                if (m < 1 || m > sd.d.size()) throw ConfigError("PCR needs 1 <= m <= rank");
                Eigen::VectorXd out = Eigen::VectorXd::Zero(sd.d.size());
                for (int i = 0; i < m; ++i) out[i] = 1.0 / sd.d[i];
                return out;
            },
            limit};
}

namespace {

void mean_and_error(const std::vector<double>& v, double& mean, double& se) {
    const double k = static_cast<double>(v.size());
    mean = 0.0;
    for (double x : v) mean += x;
    mean /= k;
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    se = v.size() > 1 ? std::sqrt(ss / (k - 1.0) / k) : 0.0;
}

}  // namespace

std::vector<HarnessReport> converge_harness(const SimConfig& cfg, const std::vector<SpectralEstimator>& estimators,
                                            Exec exec) {
    cfg.validate();
    const int R = cfg.n_replicates;
    const std::size_t E = estimators.size();
    Eigen::MatrixXd risks(R, static_cast<Eigen::Index>(E));
    for_each_index(R, exec, [&](int r) {
        const auto pb = draw_problem(cfg, r);
        const auto ds = draw_dataset(cfg, pb, r);
        const auto sd = decompose(ds.X, ds.y);
        for (std::size_t e = 0; e < E; ++e) {
            const Eigen::VectorXd beta = sd.apply(estimators[e].multipliers(sd));
            risks(r, static_cast<Eigen::Index>(e)) = sigma_risk(beta, pb.beta0, cfg.model, pb.V);
        }
    });
    std::vector<HarnessReport> out;
    for (std::size_t e = 0; e < E; ++e) {
        HarnessReport rep;
        rep.name = estimators[e].name;
        rep.limit = estimators[e].limit;
        for (int r = 0; r < R; ++r) rep.samples.push_back(risks(r, static_cast<Eigen::Index>(e)));
        mean_and_error(rep.samples, rep.mean, rep.std_error);
        rep.rel_gap = (rep.mean - rep.limit) / rep.limit;
        out.push_back(std::move(rep));
    }
    return out;
}

ProductFormReport product_form_mc(const SpikedModel& m, int p, double c_l, double c_k, const ShrinkageFn& phi,
                                  const ShrinkageFn& psi, int replicates, std::uint64_t seed, Exec exec) {
    SimConfig cl, ck;
    cl.model = m.with_c(c_l);
    cl.n = static_cast<int>(std::lround(p / c_l));
    ck.model = m.with_c(c_k);
    ck.n = static_cast<int>(std::lround(p / c_k));
    cl.p = ck.p = p;
    cl.seed = ck.seed = seed;
    cl.validate();
    ck.validate();
    std::vector<double> vals(static_cast<std::size_t>(replicates));
    for_each_index(replicates, exec, [&](int r) {
        const auto pb = draw_problem(cl, r);
        const auto dl = draw_dataset(cl, pb, r, 0);
        const auto dk = draw_dataset(ck, pb, r, 1);
        const auto sl = decompose(dl.X, dl.y);
        const auto sk = decompose(dk.X, dk.y);
        const Eigen::VectorXd q = sk.apply_fn(psi, pb.beta0);
        vals[static_cast<std::size_t>(r)] = pb.beta0.dot(sl.apply_fn(phi, q)) / pb.beta0.squaredNorm();
    });
    ProductFormReport rep;
    rep.samples = vals;
    mean_and_error(vals, rep.mean, rep.std_error);
    return rep;
}

}  // namespace sdshrink
