#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

namespace streamtts::io {

void put_u32(std::ostream& out, std::uint32_t v);
void put_u64(std::ostream& out, std::uint64_t v);
void put_f64(std::ostream& out, double v);
std::uint32_t get_u32(std::istream& in);
std::uint64_t get_u64(std::istream& in);
double get_f64(std::istream& in);
std::string get_bytes(std::istream& in, std::size_t n);

}  // namespace streamtts::io
