#pragma once

#include <map>
#include <string>

#include "qmcr/chains1d.hpp"
#include "qmcr/recurrence.hpp"

namespace qmcr {

enum class Topology { Finite, HalfLine, Line };

struct BoundState {
  // finite models
  std::optional<TomDensity> stacked;
  std::optional<CMat> full;  // density on H (x) S
  // 1d models: site-local density
  std::optional<CMat> site_local;
  int site = -1;
};

struct BoundSubspace {
  SubspaceSpec spec;         // finite models
  std::vector<int> sites;    // filled for sum-of-sites specs
};

// A model file parsed and bound at specific parameter values.
struct LoadedModel {
  std::string name;
  Topology topology = Topology::Finite;
  Index dim = 0;
  std::optional<Tom> tom;
  std::optional<HalfLineModel> halfline;
  std::optional<LineModel> line;
  std::map<std::string, double> parameters;  // after overrides
  std::map<std::string, BoundState> states;
  std::map<std::string, BoundSubspace> subspaces;
  std::string digest;  // FNV-1a of the source text
};

// Parses and binds; throws Error(ParseError) with file/key context on bad
// input. strict = false skips the column trace-preservation gate so broken
// models can still be loaded for inspection (the validate command).
LoadedModel parse_model_json(const std::string& text, const std::string& filename,
                             const std::map<std::string, double>& overrides = {},
                             bool strict = true);
LoadedModel load_model_file(const std::string& path,
                            const std::map<std::string, double>& overrides = {},
                            bool strict = true);

std::string fnv1a_hex(const std::string& bytes);

}  // namespace qmcr
