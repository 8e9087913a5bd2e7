#pragma once

// Matrix file formats.
//
// EMB1 (binary, little-endian):
//   bytes 0..3   magic "EMB1"
//   bytes 4..7   rows, unsigned 32-bit
//   bytes 8..11  cols, unsigned 32-bit
//   then rows*cols IEEE-754 32-bit floats, row-major.
// Values widen to doubles on read. Writers stage to <path>.tmp and rename, so
// failures never leave partial files.
//
// CSV: decimal reals, comma-separated, one row per line, printed with 17
// significant digits.

#include <string>

#include "otreg/matrix.hpp"

namespace otreg {

void write_emb(const std::string& path, const Matrix& m);
Matrix read_emb(const std::string& path);

Matrix read_csv_matrix(const std::string& path);
void write_csv_matrix(const std::string& path, const Matrix& m);

// Dispatch on extension: ".emb" or ".csv"; anything else is rejected.
Matrix read_matrix_auto(const std::string& path);
void write_matrix_auto(const std::string& path, const Matrix& m);

// Writes `content` atomically (temp file + rename).
void write_text_atomic(const std::string& path, const std::string& content);

// FNV-1a 64-bit digest of a file's bytes, as 16 hex characters.
std::string file_digest(const std::string& path);

}  // namespace otreg
