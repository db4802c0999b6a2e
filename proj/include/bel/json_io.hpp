#pragma once

#include <string>

#include "bel/ep.hpp"
#include "bel/gaussian.hpp"
#include "bel/posterior.hpp"
#include "bel/samplers.hpp"
#include "bel/vb.hpp"

namespace bel {

/// {"r": [...], "Q": [[...]]}, row-major full matrix.
std::string gaussian_to_json(const NaturalGaussian& g);
NaturalGaussian gaussian_from_json(const std::string& text);
void save_gaussian_json(const NaturalGaussian& g, const std::string& path);
NaturalGaussian load_gaussian_json(const std::string& path);

/// {mode, r, Q, converged, iters, seconds}
std::string laplace_to_json(const LaplaceResult& lap);
void save_laplace_json(const LaplaceResult& lap, const std::string& path);

/// JSON lines, one record per committed cycle.
void save_ep_trace_jsonl(const ep::EpTrace& trace, const std::string& path);

/// JSON lines, one record per optimizer step.
void save_vb_trace_jsonl(const VbTrace& trace, const std::string& path);

/// Parse method configs from a JSON object with sections "ep", "mh"/"hmc"
/// (chain), and "vb"; missing sections or fields keep their defaults.
ep::EpConfig ep_config_from_json(const std::string& text, const ep::EpConfig& defaults);
ChainConfig chain_config_from_json(const std::string& text, const std::string& section,
                                   const ChainConfig& defaults);
VbConfig vb_config_from_json(const std::string& text, const VbConfig& defaults);

}  // namespace bel
