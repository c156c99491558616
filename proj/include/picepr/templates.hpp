#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>

#include "picepr/errors.hpp"

namespace picepr {

enum class PromptMode { Train, Infer };

/// A prompt template: system and user text with {placeholder} slots and
/// <<gated:name>>...<</gated>> regions. Gated regions survive Train-mode
/// rendering (markers stripped, content kept) and are removed wholesale in
/// Infer mode, which is how ground-truth labels are kept out of test-time
/// prompts. Every placeholder found in the text must be declared up front.
struct PromptTemplate {
    std::string name;
    std::string system;
    std::string user;
    std::set<std::string> placeholders;

    /// Parses a template file with [system] / [user] section headers.
    static PromptTemplate load(const std::filesystem::path& path,
                               const std::set<std::string>& declared);
    static PromptTemplate from_strings(std::string name, std::string system, std::string user,
                                       const std::set<std::string>& declared);
};

/// Renders one section: gating first, then placeholder substitution in a
/// single pass (substituted values are never re-scanned, so label or facet
/// payloads cannot inject placeholders). Throws UnboundPlaceholder when a
/// declared placeholder has no value.
std::string render_template_text(const std::string& text, PromptMode mode,
                                 const std::map<std::string, std::string>& values);

/// Placeholder names found in `text` ({lowercase_identifier} tokens only).
std::set<std::string> scan_placeholders(const std::string& text);

}  // namespace picepr
