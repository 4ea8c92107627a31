pub mod oracle;
pub mod bmds;
