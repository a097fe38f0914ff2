#pragma once

#include <optional>
#include <string>

#include "ppgtcn/model.hpp"
#include "ppgtcn/pipeline.hpp"
#include "ppgtcn/quantize.hpp"
#include "ppgtcn/synth.hpp"

namespace ppgtcn {

/// "TPPG" container: 4-byte magic, u16 version, section table, payloads.
/// Little-endian throughout; float payloads are raw IEEE-754 bits, so a
/// save -> load round trip is bit-exact. Unknown section kinds are skipped.
namespace container {

inline constexpr std::uint16_t kVersion = 1;

enum class SectionKind : std::uint32_t {
    Topology = 1,
    FloatWeights = 2,
    Quant = 3,
    NormStats = 4,
    Dataset = 5,
};

} // namespace container

struct Checkpoint {
    NetworkSpec spec;
    std::optional<WeightSet> weights;
    std::optional<QuantizedModel> quant; // quant.topology mirrors spec
    std::optional<NormStats> norm;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

void save_dataset(const std::string& path, const RecordingSet& recordings);
RecordingSet load_dataset(const std::string& path);

} // namespace ppgtcn
