//! Prompt text shared by the inner loop and the outer strategies.

use crate::scope::Task;

pub fn instructions(task: Task) -> String {
    format!(
        "Translate the following {src} program into an equivalent, self-contained {tgt} program. \
         Reply with {tgt} code only.",
        src = task.source_language(),
        tgt = task.target_language(),
    )
}

fn fenced(lang: &str, code: &str) -> String {
    let mut out = format!("```{lang}\n{code}");
    if !code.ends_with('\n') {
        out.push('\n');
    }
    out.push_str("```\n");
    out
}

/// Instructions followed by the fenced source program.
pub fn translation_context(task: Task, source: &str) -> String {
    format!("{}\n\n{}", instructions(task), fenced(task.source_extension(), source))
}

/// Retry context: the original request plus the previous attempt and its
/// diagnostics. Only the latest attempt is carried.
pub fn refine_context(task: Task, source: &str, prior_program: &str, diagnostics: &str) -> String {
    format!(
        "{}\nYour previous translation:\n\n{}\nIt was rejected with these diagnostics:\n{}\nWrite a corrected translation.",
        translation_context(task, source),
        fenced(task.target_extension(), prior_program),
        if diagnostics.is_empty() { "(none)\n" } else { diagnostics },
    )
}

/// Program text from a free-form reply: the body of the first fenced block
/// when there is one, the trimmed reply otherwise. An unterminated fence
/// runs to the end of the reply.
pub fn extract_program(reply: &str) -> String {
    let Some(open) = reply.find("```") else {
        return reply.trim().to_string();
    };
    let after = &reply[open + 3..];
    let body = match after.find('\n') {
        Some(nl) => &after[nl + 1..],
        None => "",
    };
    let body = match body.find("```") {
        Some(close) => &body[..close],
        None => body,
    };
    body.trim_end().to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn contexts_embed_programs() {
        let c = translation_context(Task::CToRust, "int main(){}");
        assert!(c.contains("```c\nint main(){}\n```"));
        assert!(c.contains("Rust"));
        let r = refine_context(Task::JsToTs, "let a", "let a: number", "- [TS1] x\n");
        assert!(r.contains("```ts\nlet a: number\n```"));
        assert!(r.contains("- [TS1] x"));
    }

    #[test]
    fn program_extraction() {
        assert_eq!(extract_program("Here:\n```rust\nfn main() {}\n```\nDone."), "fn main() {}");
        assert_eq!(extract_program("  fn main() {}\n"), "fn main() {}");
        assert_eq!(extract_program("```\nlet a = 1;\n"), "let a = 1;");
    }
}
