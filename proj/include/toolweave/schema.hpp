#pragma once

#include <memory>
#include <string>
#include <vector>

#include "toolweave/util.hpp"

namespace toolweave {

struct StructuredSchema;

// Closed set of slot types for structured model replies.
struct SchemaType {
    enum class Kind { String, Integer, Boolean, Enum, List, Optional, Nested };

    Kind kind = Kind::String;
    std::vector<std::string> enum_values;         // Enum
    std::shared_ptr<SchemaType> element;          // List / Optional
    std::shared_ptr<StructuredSchema> object;     // Nested

    static SchemaType string_();
    static SchemaType integer();
    static SchemaType boolean();
    static SchemaType enumeration(std::vector<std::string> values);
    static SchemaType list_of(SchemaType element);
    static SchemaType optional_of(SchemaType element);
    static SchemaType nested(StructuredSchema schema);
};

struct SchemaField {
    std::string name;
    SchemaType type;
};

struct StructuredSchema {
    std::string name;
    std::vector<SchemaField> fields;
};

// Errors are path-annotated ("apis[1].name: expected string"); empty = valid.
std::vector<std::string> schema_validate(const StructuredSchema& schema, const Json& value);

// JSON-schema rendering used both for prompt instructions and for the HTTP
// backend's response_format block.
Json schema_to_json_schema(const StructuredSchema& schema);

// Plain-text instruction block appended to prompts.
std::string schema_instructions(const StructuredSchema& schema);

}  // namespace toolweave
