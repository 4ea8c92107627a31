//! Prompt templates for the critique, judge, critic, editor and system roles.
//!
//! Each renderer fills a fixed layout. The fill slots are:
//! `chat_history`, `assistant_response_{i}`, `N`, `critique`, `tool_descs`
//! and `agent_policy`. Everything else is constant text.

use crate::critique::Mode;

const EVALUATOR_TASK: &str = "You are an expert evaluator of AI assistant performance. Given a complete user-assistant conversation history and two generated assistant responses, you are to conduct a thorough, fact-based, and comprehensive comparison. Based on specific evidence from your evaluation, make a clear choice of which response is superior. There may be a list of tools available to the assistant. The assistant starts with one or more cycles of (thinking about which tool to use -> performing tool call -> waiting for tool response), and ends with (thinking about the answer -> answer of the question). The thinking processes, tool calls, tool responses, and answer are enclosed within their tags. There could be multiple thinking processes, tool calls, tool call parameters and tool response parameters.";

/// The six criteria shared by every evaluator-style prompt.
pub const EVALUATION_CRITERIA: &str = "- Available tools must be fully and appropriately leveraged to meet the requirements.
- Tool call names must be valid, correct, and complete.
- Tool call arguments must be valid, correct, and complete.
- Fabrication, including the creation of information or knowledge not provided by the user, conflicting with user input, or not derived from the tools, must be penalized.
- Repetitive or unnecessary tool calls must be penalized.
- Excessive or unnecessary requests for user clarification beyond what is essential must be penalized.";

const PAIRWISE_THINK_OUTPUT: &str = "Output your choice (either '1' or '2') within <choice></choice> XML tags. No explanations should precede or follow the choice. Answer in the following format.

<choice>
{your_choice}
</choice>";

const PAIRWISE_NO_THINK_OUTPUT: &str = "Output your evaluation within <evaluation></evaluation> XML tags, and then enclose your choice (either '1' or '2') within <choice></choice> XML tags. Answer in the following format.
<evaluation>
{your_evaluation}
</evaluation>
<choice>
{your_choice}
</choice>";

const CRITIC_TASK: &str = "You are an expert evaluator of AI assistant performance. Given a complete user-assistant conversation history and a generated assistant response, you are to conduct a thorough, fact-based, and comprehensive evaluation. Based on specific evidence from your evaluation, provide a concise critique on how the current assistant response should be revised. If the response is entirely correct and requires no changes, output '[correct]' as your critique.";

const CRITIC_OUTPUT: &str = "Output your final critique within <critique></critique> XML tags. No explanations should precede or follow the critique. Answer in the following format.
<critique>
{your_critique}
</critique>";

const EDITOR_TASK: &str = "You are an expert editor of AI assistant response. Given a complete user-assistant conversation history, a generated assistant response, and a critique about how to improve it, your task is to produce the revised response.";

const EDITOR_OUTPUT: &str = "Output the revised response within <revised_response></revised_response> XML tags. No explanations should precede or follow the response. Answer in the following format.
<revised_response>
{revised_response}
</revised_response>";

const SYSTEM_HEAD: &str = "# Tools
You may call one or more functions to assist with the user query.
You are provided with function signatures within <tools></tools> XML tags:";

const SYSTEM_TAIL: &str = "For each function call, return a json object with function name and arguments within <tool_call></tool_call> XML tags:
<tool_call>
{\"name\": <function-name>, \"arguments\": <args-json-object>}
</tool_call>";

/// Marker the critic emits when a response needs no change.
pub const CORRECT_MARKER: &str = "[correct]";

fn section(out: &mut String, tag: &str, body: &str) {
    out.push('<');
    out.push_str(tag);
    out.push_str(">\n");
    out.push_str(body);
    out.push_str("\n</");
    out.push_str(tag);
    out.push_str(">\n\n");
}

pub fn pairwise(mode: Mode, chat_history: &str, response_1: &str, response_2: &str) -> String {
    let mut out = String::new();
    section(&mut out, "task", EVALUATOR_TASK);
    section(&mut out, "evaluation_criteria", EVALUATION_CRITERIA);
    section(&mut out, "conversation_history", chat_history);
    section(&mut out, "current_response_1", response_1);
    section(&mut out, "current_response_2", response_2);
    out.push_str(match mode {
        Mode::Think => PAIRWISE_THINK_OUTPUT,
        Mode::NoThink => PAIRWISE_NO_THINK_OUTPUT,
    });
    out
}

/// Best-of-N judge prompt; responses are numbered from 1. `n_label` fills the
/// `{N}` slot and is normally `responses.len()`.
pub fn best_of_n(chat_history: &str, responses: &[&str], n_label: &str) -> String {
    let task = format!(
        "You are an expert evaluator of AI assistant performance. Given a complete user-assistant conversation history and {n_label} generated assistant responses, you are to conduct a thorough, fact-based, and comprehensive comparison. Based on specific evidence from your evaluation, make a clear choice of which response is superior. If multiple responses are identical and equally the best, select the one with the smallest number."
    );
    let mut out = String::new();
    section(&mut out, "task", &task);
    section(&mut out, "evaluation_criteria", EVALUATION_CRITERIA);
    section(&mut out, "conversation_history", chat_history);
    for (i, response) in responses.iter().enumerate() {
        section(&mut out, &format!("current_response_{}", i + 1), response);
    }
    out.push_str(&format!(
        "Output your choice (a number between 1 and {n_label}) within <choice></choice> XML tags. No explanations should precede or follow the choice. Answer in the following format.\n<choice>\n{{your_choice}}\n</choice>"
    ));
    out
}

pub fn critic(chat_history: &str, response: &str) -> String {
    let mut out = String::new();
    section(&mut out, "task", CRITIC_TASK);
    section(&mut out, "evaluation_criteria", EVALUATION_CRITERIA);
    section(&mut out, "conversation_history", chat_history);
    section(&mut out, "current_response", response);
    out.push_str(CRITIC_OUTPUT);
    out
}

pub fn editor(chat_history: &str, response: &str, critique: &str) -> String {
    let mut out = String::new();
    section(&mut out, "task", EDITOR_TASK);
    section(&mut out, "conversation_history", chat_history);
    section(&mut out, "current_response", response);
    section(&mut out, "critique", critique);
    out.push_str(EDITOR_OUTPUT);
    out
}

/// System message of a tool-use trajectory. `tool_descs` holds one function
/// object per line; an empty string renders an empty `<tools></tools>` block.
pub fn system_prompt(tool_descs: &str, agent_policy: Option<&str>) -> String {
    let mut out = String::from(SYSTEM_HEAD);
    if tool_descs.is_empty() {
        out.push_str("\n<tools></tools>\n\n");
    } else {
        out.push_str("\n<tools>\n");
        out.push_str(tool_descs);
        out.push_str("\n</tools>\n\n");
    }
    out.push_str(SYSTEM_TAIL);
    if let Some(policy) = agent_policy.filter(|p| !p.is_empty()) {
        out.push_str("\n\n# Agent Policy\n");
        out.push_str(policy);
    }
    out
}
