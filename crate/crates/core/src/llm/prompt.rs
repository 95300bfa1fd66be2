use chrono::Utc;
use serde::{Deserialize, Serialize};

use super::{ChatMessage, LlmError};
use crate::corpus::Post;
use crate::frame::Frame;

pub const POST_PLACEHOLDER: &str = "{post}";
pub const RELEVANT_TAG: &str = "attitude_towards_homelessness";
pub const OTHER_TAG: &str = "other";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Filter,
    Frames,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Filter => "filter",
            Stage::Frames => "frames",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelBlock {
    pub tag: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuidelineEdit {
    pub frame: Frame,
    pub appended_text: String,
    pub note: String,
    pub timestamp: i64,
}

/// A system prompt made of a preamble plus one description block per label,
/// and a user instruction carrying the `{post}` placeholder.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub stage: Stage,
    pub preamble: String,
    pub blocks: Vec<LabelBlock>,
    pub instruction_text: String,
    pub version: u32,
    #[serde(default)]
    pub edit_log: Vec<GuidelineEdit>,
}

impl PromptTemplate {
    pub fn system_text(&self) -> String {
        let mut s = String::with_capacity(4096);
        s.push_str(&self.preamble);
        s.push_str("\n\nLabel Descriptions:\n");
        for b in &self.blocks {
            s.push_str("\n- <");
            s.push_str(&b.tag);
            s.push_str(">: ");
            s.push_str(&b.description);
            s.push('\n');
        }
        s
    }

    pub fn block(&self, tag: &str) -> Option<&LabelBlock> {
        self.blocks.iter().find(|b| b.tag == tag)
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        match self.instruction_text.matches(POST_PLACEHOLDER).count() {
            0 => return Err(LlmError::MissingPlaceholder),
            1 => {}
            _ => return Err(LlmError::InvalidTemplate("`{post}` appears more than once".into())),
        }
        let mut tags: Vec<&str> = self.blocks.iter().map(|b| b.tag.as_str()).collect();
        tags.sort_unstable();
        let mut expected: Vec<&str> = match self.stage {
            Stage::Filter => vec![RELEVANT_TAG, OTHER_TAG],
            Stage::Frames => Frame::ALL.iter().map(|f| f.prompt_tag()).collect(),
        };
        expected.sort_unstable();
        if tags != expected {
            return Err(LlmError::InvalidTemplate(format!(
                "{} template must describe exactly the tags {:?}",
                self.stage.as_str(),
                expected
            )));
        }
        Ok(())
    }

    /// The relevance-filter prompt used for the first stage.
    pub fn default_filter() -> Self {
        PromptTemplate {
            stage: Stage::Filter,
            preamble: "You are an AI model trained to classify tweets related to homelessness into 2 \
                       different labels. The labels are <attitude_towards_homelessness> and <other>."
                .into(),
            blocks: vec![
                LabelBlock {
                    tag: RELEVANT_TAG.into(),
                    description: "Includes tweets about homelessness to talk about another topic or are \
                        generally about the social issue of homelessness. They cover a range of topics \
                        related to homelessness, including criticism of government bodies, institutions, \
                        or political parties, discussions about the allocation and disbursement of money, \
                        aid, and resources, criticism of societal attitudes towards homelessness, debates \
                        about who is more deserving of resources, harmful generalizations or stereotypes \
                        about homeless people, opposition to having homeless people in local areas or \
                        neighborhoods, references to media portrayals of homelessness, anecdotes about \
                        interactions with homeless people, and suggestions or ideas for solving the \
                        homelessness crisis."
                        .into(),
                },
                LabelBlock {
                    tag: OTHER_TAG.into(),
                    description: "Includes personal anecdotes from people experiencing homelessness who are \
                        sharing their personal experience while being homeless or asking for assistance \
                        and aid. This category does NOT include tweets about fictional characters and \
                        personal interactions with other homeless people. Includes statements that are \
                        nonsensical or difficult to decipher and require access to additional resources \
                        like links, media, images, etc in order to properly interpret the tweet or \
                        references to homeless animals or being politically homeless."
                        .into(),
                },
            ],
            instruction_text: "Classify the following tweet into one of the provided labels:\n\n\
                \"{post}\"\n\n\
                In concise points, please provide the relevant label that best characterizes the content \
                of the tweet. Do not \"read into\" the text with interpretations, stick to the definitions \
                of the categories strictly. The format should be the predicted label, followed by \
                \"because\", followed by reason. Do not add any additional text.\n\n\
                Feel free to reference the label descriptions to support your classification. Provide any \
                relevant context that influenced your classification."
                .into(),
            version: 1,
            edit_log: Vec::new(),
        }
    }

    /// The nine-frame multi-label prompt used for the second stage.
    pub fn default_frames() -> Self {
        let block = |f: Frame, d: &str| LabelBlock {
            tag: f.prompt_tag().into(),
            description: d.into(),
        };
        PromptTemplate {
            stage: Stage::Frames,
            preamble: "You are an AI model trained to classify tweets related to homelessness into 9 \
                       different labels. The labels include <government_critique>, <money_aid_resource>, \
                       <public_critique>, <deserving_undeserving_of_resources>, \
                       <harmful_statements_against_homelessness>, <not_in_my_backyard>, \
                       <media_portrayal>, <interaction_with_homeless_person>, and \
                       <solutions_interventions>."
                .into(),
            blocks: vec![
                block(
                    Frame::GovCrit,
                    "criticism about the government body, government institutions or political parties \
                     including critique of specific politicians, policies about homelessness, critique of \
                     programs that are being funded or considered by the government such as welfare \
                     programs, and the policing of homelessness. Also includes statements where \
                     homelessness is used as a vehicle or stand-in to talk about a broader issue \
                     portraying homelessness amongst other negative social and government problems in a \
                     list-like manner in a tweet like \"murder rates, homelessness, immigration and \
                     inflation. all suck\". Also includes statements that mention names of politicians.",
                ),
                block(
                    Frame::MoneyAid,
                    "Primarily includes discussion of money, for long term relief of homelessness. \
                     Includes aid or resource disbursement and allocation by government, institutions, \
                     organizations or wealthy individuals (not regular public) and also includes \
                     discussion or critique and suggestions on how the government decides to spend money \
                     and resources. Also includes discussions of giving or providing money, aid and \
                     resources to homeless people.",
                ),
                block(
                    Frame::SocCrit,
                    "Criticism of society in general or social norms that includes discussion of society \
                     at large instead of specific people, often pointing out hypocrisy and critiquing \
                     society's general attitudes towards homelessness. Also includes critiquing someone \
                     helping homelessness in order to gain some personal benefit where someone is being \
                     explicitly called out for doing charitable acts while filming a video or for \
                     recognition.",
                ),
                block(
                    Frame::UnDeserv,
                    "Discussion of competing priorities where homelessness is compared to other issues \
                     that more or less deserve aid and resources. Includes statements that express \
                     anti-immigration and support for policies, political initiatives and actions that \
                     restrict immigration often comparing and prioritizing aid to people experiencing \
                     homelessness over immigrants. Also includes nationalistic statements that prioritize \
                     one's own nation over others including discussion about prioritizing aid and relief \
                     for veterans and the nation's citizens over non-citizens.",
                ),
                block(
                    Frame::HarmGen,
                    "Blanket statements that generalize a negative, harmful or undesirable attribute to \
                     all people experiencing homelessness and invoke stereotypes and make assumptions \
                     about people experiencing homelessness as a whole. Examples include statements that \
                     say all people experiencing homelessness are violent, addicts, thieves, mentally \
                     ill, unkempt, dirty, and poor at managing finances and also comparing dirty, \
                     disheveled clothing to 'looking homeless'. Includes statements that express \
                     prejudice against homelessness such as sexism, homophobia, racism, anti-semitism and \
                     transphobia or dehumanize people experiencing homelessness depriving them of \
                     positive human qualities and viewing them as sub-human or as trash. Includes \
                     statements that portray homelessness as the lowest point in one's life where \
                     homelessness is used as an example of something wrong or bad. This also includes \
                     metaphors to describe objects like anti-homeless. Could also include statements \
                     that express the desire to be violent strictly against people experiencing \
                     homelessness including threats against homelessness. Includes statements that \
                     portray homelessness as the lowest point in one's life where homelessness is used \
                     as an example of something wrong or bad. This includes listing homelessness in \
                     conjunction with other issues that are viewed as problematic or negative.",
                ),
                block(
                    Frame::Nimby,
                    "Opposition by residents to proposed developments in their local area, as well as \
                     support for strict land use regulations against wanting to see homelessness in \
                     their local area and neighborhood. Also includes displacement sweeps to remove PEH \
                     from certain areas and neighborhoods.",
                ),
                block(
                    Frame::MediaPort,
                    "Reference to a fictional character that is portraying homelessness and includes \
                     tweets and links about local news media.",
                ),
                block(
                    Frame::Interact,
                    "Only includes anecdotes describing a real-life interaction with a homeless person.",
                ),
                block(
                    Frame::SolnInt,
                    "Suggestions, remedies, problem solving and ideas for alleviating the homelessness \
                     crisis including support for policy reform, existing policies and welfare programs. \
                     Includes individual people giving money, food and help for immediate relief of \
                     homelessness. Also includes charitable acts, non-profit work, providing help and \
                     emergency aid relief, and defending people experiencing homelessness from harmful \
                     stereotypes and generalizations and advocating for positive qualities for people \
                     experiencing homelessness. Also includes call to action statements that invoke a \
                     sense of urgency in taking action towards helping the homelessness crisis.",
                ),
            ],
            instruction_text: "Classify the following tweet into one or more of the provided labels:\n\n\
                \"{post}\"\n\n\
                In concise points, carefully assess the relevant label(s) that best characterize the \
                content of the tweet; try to list all the labels that are applicable for the tweet. Do \
                not \"read into\" the text with interpretations or indications or make any assumptions, \
                and stick to the definitions of the labels strictly. Each individual label should be \
                followed by \"because\", followed by the reason for why that label was picked. Do not \
                add any additional text. You have to select atleast one label, you cannot leave it out.\n\n\
                Feel free to reference the label descriptions to support your classification. Provide any \
                relevant context that influenced your classification."
                .into(),
            version: 1,
            edit_log: Vec::new(),
        }
    }
}

/// System message plus the instruction with the post text substituted verbatim.
pub fn build_prompt(template: &PromptTemplate, post: &Post) -> Result<Vec<ChatMessage>, LlmError> {
    if !template.instruction_text.contains(POST_PLACEHOLDER) {
        return Err(LlmError::MissingPlaceholder);
    }
    Ok(vec![
        ChatMessage::system(template.system_text()),
        ChatMessage::user(template.instruction_text.replacen(POST_PLACEHOLDER, &post.text, 1)),
    ])
}

/// Appends guideline text to one frame's description, producing the next template version.
pub fn apply_guideline_edit(
    template: &PromptTemplate,
    frame: Frame,
    addition: &str,
    note: &str,
) -> Result<PromptTemplate, LlmError> {
    if template.stage != Stage::Frames {
        return Err(LlmError::WrongStage);
    }
    let addition = addition.trim();
    if addition.is_empty() {
        return Err(LlmError::InvalidTemplate("guideline addition is empty".into()));
    }
    let mut next = template.clone();
    let block = next
        .blocks
        .iter_mut()
        .find(|b| b.tag == frame.prompt_tag())
        .ok_or_else(|| LlmError::UnknownFrame(frame.prompt_tag().to_string()))?;
    block.description.push(' ');
    block.description.push_str(addition);
    next.version += 1;
    next.edit_log.push(GuidelineEdit {
        frame,
        appended_text: addition.to_string(),
        note: note.to_string(),
        timestamp: Utc::now().timestamp(),
    });
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn shipped_templates_are_valid() {
        PromptTemplate::default_filter().validate().unwrap();
        PromptTemplate::default_frames().validate().unwrap();
        assert!(PromptTemplate::default_filter()
            .system_text()
            .starts_with("You are an AI model trained to classify tweets"));
    }

    #[test]
    fn build_prompt_substitutes_post() {
        let msgs = build_prompt(&PromptTemplate::default_filter(), &Post::new("p", "x", 0)).unwrap();
        assert_eq!(msgs.len(), 2);
        assert_eq!(msgs[0].role, "system");
        assert_eq!(msgs[1].role, "user");
        assert!(msgs[1].content.contains("\"x\""));
        assert!(!msgs[1].content.contains(POST_PLACEHOLDER));
    }

    #[test]
    fn build_prompt_keeps_braces_in_post() {
        let msgs = build_prompt(&PromptTemplate::default_frames(), &Post::new("p", "a {post} b", 0)).unwrap();
        assert!(msgs[1].content.contains("\"a {post} b\""));
    }

    #[test]
    fn missing_placeholder() {
        let mut t = PromptTemplate::default_filter();
        t.instruction_text = "Classify this.".into();
        assert!(matches!(build_prompt(&t, &Post::new("p", "x", 0)), Err(LlmError::MissingPlaceholder)));
        assert!(matches!(t.validate(), Err(LlmError::MissingPlaceholder)));
    }

    #[test]
    fn guideline_edit_appends_and_versions() {
        let mut t = PromptTemplate::default_frames();
        t.version = 3;
        let before = t.block("solutions_interventions").unwrap().description.clone();
        let next = apply_guideline_edit(
            &t,
            Frame::SolnInt,
            "Also includes individual people giving money, food and help for immediate relief.",
            "call to action missed",
        )
        .unwrap();
        assert_eq!(next.version, 4);
        assert_eq!(next.edit_log.len(), t.edit_log.len() + 1);
        assert!(next.block("solutions_interventions").unwrap().description.starts_with(&before));
        assert_eq!(t.block("solutions_interventions").unwrap().description, before);
        next.validate().unwrap();
    }

    #[test]
    fn guideline_edit_on_filter_stage() {
        let t = PromptTemplate::default_filter();
        assert!(matches!(apply_guideline_edit(&t, Frame::GovCrit, "x", ""), Err(LlmError::WrongStage)));
    }

    proptest! {
        #[test]
        fn edits_are_append_only(edits in proptest::collection::vec((0usize..9, "[a-z ]{1,20}"), 1..8)) {
            let mut t = PromptTemplate::default_frames();
            for (fi, text) in edits {
                if text.trim().is_empty() { continue; }
                let next = apply_guideline_edit(&t, Frame::ALL[fi], &text, "n").unwrap();
                for (old, new) in t.blocks.iter().zip(&next.blocks) {
                    prop_assert!(new.description.contains(&old.description));
                }
                prop_assert!(next.system_text().len() > t.system_text().len());
                t = next;
            }
        }
    }
}
