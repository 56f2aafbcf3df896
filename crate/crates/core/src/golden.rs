//! The six worked schema instances shipped under `fixtures/golden`: an OKR
//! promotion workflow and an incident postmortem workflow.

pub const OKR_ENCODE_KEY_TASK: &str =
    include_str!("../../../fixtures/golden/okr_encode_key_task.json");
pub const OKR_ENCODE_MEETING: &str =
    include_str!("../../../fixtures/golden/okr_encode_meeting.json");
pub const OKR_PROMOTE: &str = include_str!("../../../fixtures/golden/okr_promote.json");

pub const INCIDENT_ENCODE: &str =
    include_str!("../../../fixtures/golden/incident_encode_timeline.json");
pub const INCIDENT_LOCK: &str = include_str!("../../../fixtures/golden/incident_lock.json");
pub const INCIDENT_SUMMARIZE: &str =
    include_str!("../../../fixtures/golden/incident_summarize.json");

pub const OKR_WORKFLOW: [&str; 3] = [OKR_ENCODE_KEY_TASK, OKR_ENCODE_MEETING, OKR_PROMOTE];
pub const INCIDENT_WORKFLOW: [&str; 3] = [INCIDENT_ENCODE, INCIDENT_LOCK, INCIDENT_SUMMARIZE];

pub const ALL: [&str; 6] = [
    OKR_ENCODE_KEY_TASK,
    OKR_ENCODE_MEETING,
    OKR_PROMOTE,
    INCIDENT_ENCODE,
    INCIDENT_LOCK,
    INCIDENT_SUMMARIZE,
];
