#pragma once

// Finite vector families with certified independence properties.  Two kinds:
// explicit integer witnesses whose ranks are certified in exact arithmetic,
// and randomly sampled families that track a prescribed value row within a
// box, have small increments, and keep difference/restriction matrices far
// from rank deficiency.  The sampled families feed the window perturbations.

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "lipembed/common.hpp"

namespace lipembed::genvec {

inline constexpr double kDefaultRankTol = 1e-8;
inline constexpr double kSampledMarginMin = 1e-6;

using Matrix = std::vector<std::vector<double>>;

/// Adjacent differences (u_2 - u_1, ..., u_k - u_{k-1}).
inline std::vector<double> diff(const std::vector<double>& u) {
    if (u.size() < 2) throw precondition_error("diff: need at least two entries");
    std::vector<double> d(u.size() - 1);
    for (std::size_t i = 0; i + 1 < u.size(); ++i) d[i] = u[i + 1] - u[i];
    return d;
}

/// First L adjacent differences.
inline std::vector<double> diff_head(const std::vector<double>& u, std::size_t L) {
    if (u.size() < L + 1) throw precondition_error("diff_head: vector shorter than L+1");
    std::vector<double> d(L);
    for (std::size_t i = 0; i < L; ++i) d[i] = u[i + 1] - u[i];
    return d;
}

struct RankCert {
    std::size_t rows = 0;
    std::size_t cols = 0;
    int rank = 0;
    double margin = 0.0;  // smallest retained pivot relative to the largest
    bool exact = false;   // integer path ran and its rank is authoritative
    int exact_rank = -1;
};

namespace detail {

inline bool is_small_integer_matrix(const Matrix& rows) {
    for (const auto& r : rows)
        for (double v : r)
            if (std::abs(v) > 64.0 || v != std::nearbyint(v)) return false;
    return true;
}

// Fraction-free (Bareiss) elimination over the integers.  Entry growth is
// bounded by Hadamard's inequality; __int128 covers every matrix this
// library certifies by orders of magnitude.
inline int exact_integer_rank(const Matrix& rows) {
    std::size_t m = rows.size(), n = rows.empty() ? 0 : rows[0].size();
    std::vector<std::vector<__int128>> a(m, std::vector<__int128>(n));
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j)
            a[i][j] = static_cast<long long>(std::nearbyint(rows[i][j]));

    int rank = 0;
    __int128 prev = 1;
    for (std::size_t col = 0; col < n && static_cast<std::size_t>(rank) < m; ++col) {
        std::size_t piv = m;
        for (std::size_t r = rank; r < m; ++r)
            if (a[r][col] != 0) {
                piv = r;
                break;
            }
        if (piv == m) continue;
        std::swap(a[static_cast<std::size_t>(rank)], a[piv]);
        for (std::size_t r = rank + 1; r < m; ++r) {
            for (std::size_t c = col + 1; c < n; ++c)
                a[r][c] = (a[static_cast<std::size_t>(rank)][col] * a[r][c] -
                           a[r][col] * a[static_cast<std::size_t>(rank)][c]) /
                          prev;
            a[r][col] = 0;
        }
        prev = a[static_cast<std::size_t>(rank)][col];
        ++rank;
    }
    return rank;
}

}  // namespace detail

/// Numerical rank by full-pivoted Gaussian elimination.  A pivot is retained
/// while its magnitude stays above rank_tol times the largest pivot; margin
/// reports the smallest retained pivot relative to the largest.  Matrices of
/// small integers are additionally certified by exact integer elimination.
inline RankCert rank_check(const Matrix& rows, double rank_tol = kDefaultRankTol) {
    if (rows.empty() || rows[0].empty()) throw precondition_error("rank_check: empty matrix");
    std::size_t m = rows.size(), n = rows[0].size();
    for (const auto& r : rows)
        if (r.size() != n) throw precondition_error("rank_check: ragged matrix");

    RankCert cert;
    cert.rows = m;
    cert.cols = n;
    if (detail::is_small_integer_matrix(rows)) {
        cert.exact = true;
        cert.exact_rank = detail::exact_integer_rank(rows);
    }

    Matrix a = rows;
    std::size_t steps = std::min(m, n);
    double first_pivot = 0.0, last_pivot = 0.0;
    int rank = 0;
    for (std::size_t k = 0; k < steps; ++k) {
        std::size_t pr = k, pc = k;
        double best = 0.0;
        for (std::size_t i = k; i < m; ++i)
            for (std::size_t j = k; j < n; ++j)
                if (std::abs(a[i][j]) > best) {
                    best = std::abs(a[i][j]);
                    pr = i;
                    pc = j;
                }
        if (k == 0) first_pivot = best;
        if (best <= 0.0 || (k > 0 && best < rank_tol * first_pivot)) break;
        std::swap(a[k], a[pr]);
        for (std::size_t i = 0; i < m; ++i) std::swap(a[i][k], a[i][pc]);
        for (std::size_t i = k + 1; i < m; ++i) {
            double factor = a[i][k] / a[k][k];
            a[i][k] = 0.0;
            for (std::size_t j = k + 1; j < n; ++j) a[i][j] -= factor * a[k][j];
        }
        last_pivot = best;
        ++rank;
    }
    cert.rank = rank;
    cert.margin = first_pivot > 0.0 ? last_pivot / first_pivot : 0.0;
    return cert;
}

/// Singular-value margin sigma_min/sigma_max of a full-row-rank candidate,
/// computed by Jacobi eigenvalue iteration on the small Gram matrix G G^T.
/// Deliberately a different route than rank_check; the sampler accepts with
/// one and the post-hoc checker re-tests with the other.
inline std::pair<int, double> singular_rank(const Matrix& rows, double rel_tol = kSampledMarginMin) {
    std::size_t m = rows.size(), n = rows[0].size();
    if (m > n) throw precondition_error("singular_rank: expected a wide matrix");
    Matrix g(m, std::vector<double>(m, 0.0));
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < n; ++k) s += rows[i][k] * rows[j][k];
            g[i][j] = s;
        }
    // Cyclic Jacobi sweeps; the Gram matrices here are tiny.
    for (int sweep = 0; sweep < 64; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < m; ++p)
            for (std::size_t q = p + 1; q < m; ++q) off += g[p][q] * g[p][q];
        if (off < 1e-30) break;
        for (std::size_t p = 0; p < m; ++p)
            for (std::size_t q = p + 1; q < m; ++q) {
                if (std::abs(g[p][q]) < 1e-300) continue;
                double theta = 0.5 * std::atan2(2.0 * g[p][q], g[q][q] - g[p][p]);
                double c = std::cos(theta), s = std::sin(theta);
                for (std::size_t k = 0; k < m; ++k) {
                    double gpk = g[p][k], gqk = g[q][k];
                    g[p][k] = c * gpk - s * gqk;
                    g[q][k] = s * gpk + c * gqk;
                }
                for (std::size_t k = 0; k < m; ++k) {
                    double gkp = g[k][p], gkq = g[k][q];
                    g[k][p] = c * gkp - s * gkq;
                    g[k][q] = s * gkp + c * gkq;
                }
            }
    }
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        double ev = std::max(g[i][i], 0.0);
        lo = std::min(lo, ev);
        hi = std::max(hi, ev);
    }
    double smax = std::sqrt(hi), smin = std::sqrt(lo);
    double margin = smax > 0.0 ? smin / smax : 0.0;
    int rank = 0;
    for (std::size_t i = 0; i < m; ++i)
        if (std::sqrt(std::max(g[i][i], 0.0)) >= rel_tol * smax) ++rank;
    return {rank, margin};
}

struct VecFamily {
    std::size_t m = 0;    // number of vectors
    std::size_t dim = 0;  // entries per vector
    Matrix vectors;
    std::string provenance;  // "witness_e_du", "witness_shifted", "sampled"
    std::uint64_t seed = 0;
    std::vector<RankCert> certificates;
    double min_margin = 0.0;
};

/// Integer witness family u_i = (-1 repeated i times, then zeros) of length
/// l+1.  The differences are standard basis vectors, so the all-ones row
/// together with them has rank m+1 whenever l >= m+1.
inline VecFamily witness_e_du(int l, int m) {
    if (m < 1) throw precondition_error("witness_e_du: need m >= 1");
    if (l < m + 1) throw precondition_error("witness_e_du: need l >= m+1");
    VecFamily fam;
    fam.m = static_cast<std::size_t>(m);
    fam.dim = static_cast<std::size_t>(l + 1);
    fam.provenance = "witness_e_du";
    for (int i = 1; i <= m; ++i) {
        std::vector<double> u(fam.dim, 0.0);
        for (int j = 0; j < i; ++j) u[static_cast<std::size_t>(j)] = -1.0;
        fam.vectors.push_back(std::move(u));
    }
    Matrix cand;
    cand.emplace_back(static_cast<std::size_t>(l), 1.0);
    for (const auto& u : fam.vectors) cand.push_back(diff(u));
    RankCert cert = rank_check(cand);
    if (!cert.exact || cert.exact_rank != m + 1)
        throw integrity_error("witness_e_du: exact rank certificate failed");
    fam.certificates.push_back(cert);
    fam.min_margin = cert.margin;
    return fam;
}

/// Integer witness family in {0,1}^n: u_i has ones exactly at positions i and
/// alpha+l-i (1-based).  Restricting each vector to the first l positions and
/// to the l positions starting at alpha yields 2m vectors of rank 2m.
inline VecFamily witness_shifted(int n, int l, int m, int alpha) {
    if (m < 1) throw precondition_error("witness_shifted: need m >= 1");
    if (!(n > l && l >= 2 * m)) throw precondition_error("witness_shifted: need n > l >= 2m");
    if (alpha < 2 || alpha > n - l + 1)
        throw precondition_error("witness_shifted: alpha outside [2, n-l+1]");
    VecFamily fam;
    fam.m = static_cast<std::size_t>(m);
    fam.dim = static_cast<std::size_t>(n);
    fam.provenance = "witness_shifted";
    for (int i = 1; i <= m; ++i) {
        std::vector<double> u(fam.dim, 0.0);
        u[static_cast<std::size_t>(i - 1)] = 1.0;
        u[static_cast<std::size_t>(alpha + l - i - 1)] = 1.0;
        fam.vectors.push_back(std::move(u));
    }
    Matrix cand;
    for (const auto& u : fam.vectors) {
        std::vector<double> head(u.begin(), u.begin() + l);
        std::vector<double> shifted(u.begin() + (alpha - 1), u.begin() + (alpha - 1) + l);
        cand.push_back(std::move(head));
        cand.push_back(std::move(shifted));
    }
    RankCert cert = rank_check(cand);
    if (!cert.exact || cert.exact_rank != 2 * m)
        throw integrity_error("witness_shifted: exact rank certificate failed");
    fam.certificates.push_back(cert);
    fam.min_margin = cert.margin;
    return fam;
}

namespace detail {

// Try one family draw: each u_m tracks f_vals[m] within the open box and
// moves by less than incr per step, clipped into [0,1].
inline bool draw_family(const Matrix& f_vals, double box, double incr, std::mt19937_64& rng,
                        Matrix& out) {
    std::size_t M = f_vals.size(), N = f_vals[0].size();
    out.assign(M, std::vector<double>(N, 0.0));
    for (std::size_t m = 0; m < M; ++m) {
        for (std::size_t n = 0; n < N; ++n) {
            double lo = std::max(0.0, f_vals[m][n] - box);
            double hi = std::min(1.0, f_vals[m][n] + box);
            if (n > 0) {
                lo = std::max(lo, out[m][n - 1] - incr);
                hi = std::min(hi, out[m][n - 1] + incr);
            }
            if (!(hi > lo)) return false;
            // Shave the ends so the strict inequalities hold exactly.
            double pad = 1e-9 * (hi - lo);
            out[m][n] = uniform_in(rng, lo + pad, hi - pad);
        }
    }
    return true;
}

inline Matrix separating_candidate(const Matrix& fam, std::size_t L, std::size_t shift) {
    Matrix cand;
    for (const auto& u : fam) {
        cand.emplace_back(u.begin(), u.begin() + static_cast<long>(L));
        cand.emplace_back(u.begin() + static_cast<long>(shift),
                          u.begin() + static_cast<long>(shift + L));
    }
    return cand;
}

}  // namespace detail

/// Sampled family for the shift-separation construction.  Properties:
///  (1) each u_m stays within the open box around its value row,
///  (2) adjacent increments are below incr,
///  (3) the all-ones row together with the first-L difference rows has full
///      rank M+1 with pivot margin >= 1e-6,
///  (4) for every positive grid shift, the 2M restrictions of the family to
///      the leading L positions and to the shifted L positions have full
///      rank 2M with pivot margin >= 1e-6.
/// Rejection-samples up to max_tries draws; deterministic in the seed.
inline VecFamily sample_generic_u(const Matrix& f_vals, double box, double incr, std::size_t L,
                                  std::uint64_t seed, int max_tries = 1000) {
    if (f_vals.empty() || f_vals[0].empty())
        throw precondition_error("sample_generic_u: empty value rows");
    std::size_t M = f_vals.size(), N = f_vals[0].size();
    for (const auto& r : f_vals)
        if (r.size() != N) throw precondition_error("sample_generic_u: ragged value rows");
    if (!(box > 0.0)) throw precondition_error("sample_generic_u: box must be positive");
    if (!(incr > 0.0)) throw precondition_error("sample_generic_u: incr must be positive");
    if (!(N > L && L >= 2 * M))
        throw precondition_error("sample_generic_u: need N > L >= 2M");

    std::mt19937_64 rng(seed);
    int fail_feasible = 0, fail_p3 = 0, fail_p4 = 0;
    for (int attempt = 0; attempt < max_tries; ++attempt) {
        Matrix draw;
        if (!detail::draw_family(f_vals, box, incr, rng, draw)) {
            ++fail_feasible;
            continue;
        }
        std::vector<RankCert> certs;
        double min_margin = 1.0;

        Matrix head;
        head.emplace_back(L, 1.0);
        for (const auto& u : draw) head.push_back(diff_head(u, L));
        RankCert c3 = rank_check(head);
        if (c3.rank != static_cast<int>(M) + 1 || c3.margin < kSampledMarginMin) {
            ++fail_p3;
            continue;
        }
        certs.push_back(c3);
        min_margin = std::min(min_margin, c3.margin);

        bool ok = true;
        for (std::size_t shift = 1; shift + L <= N; ++shift) {
            RankCert c4 = rank_check(detail::separating_candidate(draw, L, shift));
            if (c4.rank != static_cast<int>(2 * M) || c4.margin < kSampledMarginMin) {
                ok = false;
                break;
            }
            certs.push_back(c4);
            min_margin = std::min(min_margin, c4.margin);
        }
        if (!ok) {
            ++fail_p4;
            continue;
        }

        VecFamily fam;
        fam.m = M;
        fam.dim = N;
        fam.vectors = std::move(draw);
        fam.provenance = "sampled";
        fam.seed = seed;
        fam.certificates = std::move(certs);
        fam.min_margin = min_margin;
        return fam;
    }
    throw sampling_error("sample_generic_u: exhausted " + std::to_string(max_tries) +
                         " tries (infeasible box: " + std::to_string(fail_feasible) +
                         ", difference rank: " + std::to_string(fail_p3) +
                         ", shifted rank: " + std::to_string(fail_p4) + ")");
}

/// Sampled family for the constant-avoidance construction: box and increment
/// properties as above, plus independence of the all-ones row from the
/// full-grid difference rows (which implies independence of the all-ones row
/// from the vectors themselves).
inline VecFamily sample_avoid_family(const Matrix& f_vals, double box, double incr,
                                     std::uint64_t seed, int max_tries = 1000) {
    if (f_vals.empty() || f_vals[0].empty())
        throw precondition_error("sample_avoid_family: empty value rows");
    std::size_t M = f_vals.size(), N = f_vals[0].size();
    if (!(box > 0.0)) throw precondition_error("sample_avoid_family: box must be positive");
    if (!(incr > 0.0)) throw precondition_error("sample_avoid_family: incr must be positive");
    if (N < M + 2) throw precondition_error("sample_avoid_family: need N >= M+2");

    std::mt19937_64 rng(seed);
    int fail_feasible = 0, fail_rank = 0;
    for (int attempt = 0; attempt < max_tries; ++attempt) {
        Matrix draw;
        if (!detail::draw_family(f_vals, box, incr, rng, draw)) {
            ++fail_feasible;
            continue;
        }
        Matrix cand;
        cand.emplace_back(N - 1, 1.0);
        for (const auto& u : draw) cand.push_back(diff(u));
        RankCert cert = rank_check(cand);
        if (cert.rank != static_cast<int>(M) + 1 || cert.margin < kSampledMarginMin) {
            ++fail_rank;
            continue;
        }
        VecFamily fam;
        fam.m = M;
        fam.dim = N;
        fam.vectors = std::move(draw);
        fam.provenance = "sampled";
        fam.seed = seed;
        fam.certificates.push_back(cert);
        fam.min_margin = cert.margin;
        return fam;
    }
    throw sampling_error("sample_avoid_family: exhausted " + std::to_string(max_tries) +
                         " tries (infeasible box: " + std::to_string(fail_feasible) +
                         ", rank: " + std::to_string(fail_rank) + ")");
}

struct FamilyCheck {
    bool ok = true;
    double min_margin = 1.0;
    std::string detail;

    void fail(const std::string& why) {
        ok = false;
        if (!detail.empty()) detail += "; ";
        detail += why;
    }
};

namespace detail {

inline bool box_and_increment(const Matrix& f_vals, const VecFamily& fam, double box, double incr,
                              FamilyCheck& out) {
    for (std::size_t m = 0; m < fam.m; ++m) {
        for (std::size_t n = 0; n < fam.dim; ++n) {
            double u = fam.vectors[m][n];
            if (u < 0.0 || u > 1.0) {
                out.fail("value outside [0,1]");
                return false;
            }
            if (!(std::abs(u - f_vals[m][n]) < box)) {
                out.fail("box violated at (" + std::to_string(m) + "," + std::to_string(n) + ")");
                return false;
            }
            if (n > 0 && !(std::abs(u - fam.vectors[m][n - 1]) < incr)) {
                out.fail("increment violated at (" + std::to_string(m) + "," + std::to_string(n) +
                         ")");
                return false;
            }
        }
    }
    return true;
}

}  // namespace detail

/// Brute-force re-check of a separating family from scratch: strict box and
/// increment inequalities, then singular-value rank margins for the leading
/// difference matrix and for every admissible shift.  Uses the singular-value
/// route rather than the pivoted elimination the sampler accepted with.
inline FamilyCheck check_family_separating(const Matrix& f_vals, const VecFamily& fam, double box,
                                           double incr, std::size_t L,
                                           double margin_min = kSampledMarginMin) {
    FamilyCheck out;
    if (fam.vectors.size() != fam.m || fam.m != f_vals.size()) {
        out.fail("family shape mismatch");
        return out;
    }
    if (!detail::box_and_increment(f_vals, fam, box, incr, out)) return out;

    Matrix head;
    head.emplace_back(L, 1.0);
    for (const auto& u : fam.vectors) head.push_back(diff_head(u, L));
    auto [r3, m3] = singular_rank(head, margin_min);
    if (r3 != static_cast<int>(fam.m) + 1 || m3 < margin_min)
        out.fail("difference matrix margin " + std::to_string(m3));
    out.min_margin = std::min(out.min_margin, m3);

    for (std::size_t shift = 1; shift + L <= fam.dim; ++shift) {
        auto [r4, m4] = singular_rank(detail::separating_candidate(fam.vectors, L, shift),
                                      margin_min);
        if (r4 != static_cast<int>(2 * fam.m) || m4 < margin_min)
            out.fail("shift " + std::to_string(shift) + " margin " + std::to_string(m4));
        out.min_margin = std::min(out.min_margin, m4);
    }
    return out;
}

/// Brute-force re-check of a constant-avoidance family: box and increment
/// inequalities, the full-grid difference condition, and the direct
/// independence of the all-ones row from the vectors themselves.
inline FamilyCheck check_family_avoid(const Matrix& f_vals, const VecFamily& fam, double box,
                                      double incr, double margin_min = kSampledMarginMin) {
    FamilyCheck out;
    if (fam.vectors.size() != fam.m || fam.m != f_vals.size()) {
        out.fail("family shape mismatch");
        return out;
    }
    if (!detail::box_and_increment(f_vals, fam, box, incr, out)) return out;

    Matrix diffs;
    diffs.emplace_back(fam.dim - 1, 1.0);
    for (const auto& u : fam.vectors) diffs.push_back(diff(u));
    auto [rd, md] = singular_rank(diffs, margin_min);
    if (rd != static_cast<int>(fam.m) + 1 || md < margin_min)
        out.fail("full-grid difference margin " + std::to_string(md));
    out.min_margin = std::min(out.min_margin, md);

    Matrix direct;
    direct.emplace_back(fam.dim, 1.0);
    for (const auto& u : fam.vectors) direct.push_back(u);
    auto [rr, mr] = singular_rank(direct, 1e-12);
    if (rr != static_cast<int>(fam.m) + 1) out.fail("vectors lie in the constants' span");
    (void)mr;
    return out;
}

}  // namespace lipembed::genvec
