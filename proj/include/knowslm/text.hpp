#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace knowslm::text {

// Pluggable token counter. The default counts whitespace-delimited words.
using TokenCounter = std::function<std::size_t(std::string_view)>;

std::size_t count_words(std::string_view s);
TokenCounter default_token_counter();

std::vector<std::string_view> split_whitespace(std::string_view s);

// Byte offsets [begin, end) of each whitespace-delimited word.
struct WordSpan {
  std::size_t begin;
  std::size_t end;
};
std::vector<WordSpan> word_spans(std::string_view s);

std::string_view trim(std::string_view s);
std::string to_lower_ascii(std::string_view s);
bool is_blank(std::string_view s);

// Lowercased ASCII-alphanumeric runs. Bytes >= 0x80 are kept inside terms so
// UTF-8 words stay intact.
std::vector<std::string> terms(std::string_view s);

// Words of length >= 4 that are not common function words, in order.
std::vector<std::string> content_terms(std::string_view s);

// Most frequent content term; ties go to the earliest occurrence.
// Returns an empty string when there is none.
std::string top_term(std::string_view s);

std::vector<std::string> split_lines(std::string_view s);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

// RFC-4180 helpers.
std::string csv_field(std::string_view field);
std::vector<std::vector<std::string>> parse_csv(std::string_view data);

std::uint64_t fnv1a64(std::string_view s);
std::string sha256_hex(std::string_view data);

}  // namespace knowslm::text
