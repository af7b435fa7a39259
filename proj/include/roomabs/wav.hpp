#pragma once

#include <filesystem>
#include <string>

#include "roomabs/rir.hpp"

namespace roomabs {

// Writes a mono 32-bit IEEE float RIFF/WAVE file. A non-empty comment goes
// into a LIST/INFO ICMT chunk.
void write_wav(const std::filesystem::path& path, const Rir& rir, const std::string& comment = {});

// Reads a RIFF/WAVE file (PCM 16/24/32-bit or IEEE float 32/64-bit). Only the
// first channel of multichannel files is kept.
Rir read_wav(const std::filesystem::path& path);

}  // namespace roomabs
