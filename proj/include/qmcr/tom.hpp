#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "qmcr/channels.hpp"

namespace qmcr {

// Transition Operator Matrix on a finite vertex set: a grid of CP blocks whose
// column sums are trace preserving. Absent blocks are structural zeros.
struct Tom {
  std::vector<std::string> vertices;
  Index dim = 0;
  std::map<std::pair<int, int>, KrausMap> blocks;  // (to, from) -> CP map

  int size() const { return static_cast<int>(vertices.size()); }
  const KrausMap* block(int i, int j) const;
  void set_block(int i, int j, KrausMap m);
  int index_of(const std::string& label) const;
};

// Per-vertex positive blocks with total trace 1.
struct TomDensity {
  std::vector<CMat> site;

  double total_trace() const;
  bool is_density(double tol = tols().density_trace) const;  // PSD blocks, total trace 1
  bool supported_on(const std::vector<int>& sites, double tol = tols().state_support) const;
};

TomDensity site_density(int nsites, int site, const CMat& rho);

struct TomValidation {
  std::vector<double> column_tp_residual;            // max-norm per column
  std::map<std::pair<int, int>, bool> block_cp;      // per stored block
  double worst_tp_residual() const;
  bool ok(double tol = tols().tp_check) const;
};

TomValidation validate(const Tom& t);

// Block matrix representation on the stacked vec space [vec(rho_1); vec(rho_2); ...].
struct BlockSuperOperator {
  Index d = 0;  // internal dimension
  int n = 0;    // sites
  CMat mat;     // (n d^2) x (n d^2)

  TomDensity apply(const TomDensity& rho) const;
};

BlockSuperOperator block_superop(const Tom& t);

// CPTP embedding on H (x) S, dimension dim * |V|, with Kraus operators B (x) |i><j|.
// Index convention is internal-major: component (a, site s) sits at a*|V| + s.
KrausMap embed_cptp(const Tom& t);

// Zeroes every off-site block of an operator on H (x) S.
CMat block_diagonal_part(const CMat& rho, Index d, int nsites);

// Conversions between the stacked and the full H (x) S pictures.
CMat stack_to_full(const TomDensity& rho, Index d);
TomDensity full_to_stack(const CMat& rho, Index d, int nsites);

// Stacked-vector packing (site-major, row-major vec inside each block).
CVec stack_vec(const TomDensity& rho);
TomDensity unstack_vec(const CVec& v, Index d, int nsites);

struct OqwSpec {
  Index dim = 0;
  std::vector<std::string> vertices;
  std::map<std::pair<int, int>, CMat> effects;  // (to, from) -> single effect matrix
};

Tom from_oqw(const OqwSpec& spec);
Tom from_stochastic(const RMat& p, const std::vector<std::string>& labels = {});

// Irreducibility of the chain itself, decided on the block representation.
bool is_irreducible(const Tom& t);

// Stacked invariant density (unique when irreducible).
TomDensity invariant_density(const Tom& t);

}  // namespace qmcr
