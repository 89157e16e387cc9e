// conley-lab: symplectic linear algebra.
//
// Conventions used throughout the toolkit: phase space is R^{2n} with
// coordinates z = (x_1..x_n, y_1..y_n) stacked in that order, the symplectic
// form is omega = sum_i dx_i ^ dy_i, i.e. omega(u, v) = u^T J v with
//
//         J = [ 0  I ]            and the Hamiltonian field matrix
//             [-I  0 ]            J_H = -J = [ 0 -I; I 0 ],  X_H = J_H grad H.
//
// (i_{X_H} omega = -dH; a worked rotation example lives in the README and in
// tests/test_flow.cpp so every downstream sign can be traced to this choice.)
#pragma once

#include "conley/common.hpp"

#include <utility>
#include <vector>

namespace conley {

// J for omega = sum dx_i ^ dy_i (block [0 I; -I 0]).
Mat omega_matrix(int n);
// J_H = -J; X_H = J_H * grad H.
Mat field_matrix(int n);

// omega(u, v) = u^T J v.
double omega_pair(const Vec& u, const Vec& v);

// max-norm of M^T J M - J; is_symplectic checks it against tol.
double symplectic_residual(const Mat& M);
bool is_symplectic(const Mat& M, double tol = 1e-9);

// A symplectic frame: the columns of C form a symplectic basis (C^T J C = J).
// The first n columns are the x-group, the last n the y-group; each group
// spans a Lagrangian subspace.
struct SymplecticFrame {
    Mat C;

    explicit SymplecticFrame(Mat basis, double tol = 1e-9);
    int n() const { return static_cast<int>(C.cols()) / 2; }
};

// Operator norm of A seen in the frame: ||C^{-1} A C||_2.  Frames are how
// "small" is measured for normal forms; rescaling the frame can shrink the
// norm of a nilpotent operator at will (see tests for the [0 1; 0 0] example).
double frame_norm(const Mat& A, const SymplecticFrame& frame);

// All eigenvalues within tol of 1.
bool is_unipotent(const Mat& M, double tol = 1e-9);

// A Lagrangian splitting V = L (+) L'; columns of each block form a basis.
struct LagrangianSplitting {
    Mat L;       // 2n x n
    Mat Lprime;  // 2n x n
};

struct SqueezeResult {
    Mat Psi;                    // symplectic conjugator, block-diagonal wrt split
    LagrangianSplitting split;  // Phi(L) = L; Psi preserves L and L'
    double residual;            // ||Psi Phi Psi^{-1} - I||_2 actually achieved
    int depth;                  // recursion depth used
};

// Conjugate a unipotent symplectic Phi arbitrarily close to the identity:
// returns Psi with ||Psi Phi Psi^{-1} - I|| < sigma, together with a
// Lagrangian splitting L (+) L' such that Phi(L) = L and Psi preserves both
// subspaces.  The construction mirrors the inductive proof: split off either
// a symplectic piece of ker(Phi - I) or, when the kernel K is isotropic,
// write V = K (+) V0 (+) N with N ~ K* and squeeze the off-diagonal blocks
// with Lambda = lambda I.
SqueezeResult squeeze_unipotent(const Mat& Phi, double sigma, double tol = 1e-9);

// Test/demo helper: a random unipotent symplectic matrix, built as
// S exp(N) S^{-1} with N strictly upper triangular Hamiltonian in a random
// symplectic frame S.
Mat random_unipotent(int n, Rng& rng, double magnitude = 1.0);

// Random symplectic frame (columns), via Gram-Schmidt against omega.
Mat random_symplectic(int n, Rng& rng, double spread = 1.0);

// Gram-Schmidt against omega: completes the columns of seed (possibly empty)
// to a full symplectic basis of R^{2n}.  Used by squeeze_unipotent and by the
// frame constructors.
Mat symplectic_complete(int n, const Mat& seed, double tol = 1e-12);

// Pairwise Gram-Schmidt against omega on an arbitrary pool of columns:
// returns [e_1..e_m | f_1..f_m] with omega(e_i, f_j) = delta_ij spanning the
// pool, provided omega restricts nondegenerately to that span (throws
// otherwise).  Zero and dependent columns are consumed silently.
Mat omega_gram_schmidt(const Mat& cols, double tol = 1e-12);

}  // namespace conley
