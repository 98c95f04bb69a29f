#pragma once

#include <filesystem>

#include "tprl/agent.hpp"
#include "tprl/autoencoder.hpp"
#include "tprl/checkpoint.hpp"

namespace tprl {

// Model <-> checkpoint adapters. Files are self-describing: architecture
// hyperparameters are recovered from tensor shapes plus a tiny meta tensor,
// and shape disagreements surface as IoError instead of silent corruption.

// Section "autoencoder": encoder/decoder tensors plus a 1x1 "frozen" flag.
Checkpoint autoencoder_checkpoint(const AutoencoderParams& ae);
AutoencoderParams autoencoder_from_checkpoint(const Checkpoint& ck);
void save_autoencoder(const std::filesystem::path& path, const AutoencoderParams& ae);
AutoencoderParams load_autoencoder(const std::filesystem::path& path);

// Section "policy": projections, attention, retention head and a 1x2 meta
// tensor [heads, mlp_only]. Section "value": the value head.
Checkpoint agent_checkpoint(const AgentParams& agent);
AgentParams agent_from_checkpoint(const Checkpoint& ck);
void save_agent(const std::filesystem::path& path, const AgentParams& agent);
AgentParams load_agent(const std::filesystem::path& path);

}  // namespace tprl
