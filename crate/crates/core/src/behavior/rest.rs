//! HTTP interface.
//!
//! | method | path                      | body / result                       |
//! |--------|---------------------------|-------------------------------------|
//! | GET    | `/api/profiles`           | profiles ordered by id              |
//! | POST   | `/api/profiles`           | profile, 201                        |
//! | GET    | `/api/profiles/{id}`      | profile                             |
//! | PUT    | `/api/profiles/{id}`      | profile with the same id            |
//! | DELETE | `/api/profiles/{id}`      | 204                                 |
//! | GET    | `/api/robot`              | robot definition                    |
//! | PUT    | `/api/robot`              | robot definition                    |
//! | POST   | `/api/exp/{profile_id}`   | 202 with the new request            |
//! | GET    | `/api/exp/{request_id}`   | request status                      |
//! | GET    | `/api/assets`             | asset manifest                      |
//! | PUT    | `/api/assets/{id}`        | raw bytes, 201                      |
//! | GET    | `/api/assets/{id}`        | raw bytes                           |
//!
//! Errors are `{"error": <code>, "path": <field or null>, "message": <text>}`
//! with codes `NotFound`, `ValidationError`, `AssetMissing`, `Conflict`,
//! `BadJson`, `DispatchFailed` and `Internal`.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::json;

use super::exp::ExpPipeline;
use super::store::{Store, StoreError};
use super::types::{parse_body, BehaviorProfile, BodyError, RobotDefinition, ValidationError};

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<Store>,
    pub exp: Arc<ExpPipeline>,
}

pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    path: Option<String>,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, path: Option<String>, message: impl ToString) -> Self {
        ApiError { status, code, path, message: message.to_string() }
    }

    fn not_found(what: impl ToString) -> Self {
        Self::new(StatusCode::NOT_FOUND, "NotFound", None, what)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({"error": self.code, "path": self.path, "message": self.message}))).into_response()
    }
}

impl From<ValidationError> for ApiError {
    fn from(e: ValidationError) -> Self {
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "ValidationError", Some(e.path.clone()), e)
    }
}

impl From<BodyError> for ApiError {
    fn from(e: BodyError) -> Self {
        match e {
            BodyError::BadJson(m) => ApiError::new(StatusCode::BAD_REQUEST, "BadJson", None, m),
            BodyError::Invalid(v) => v.into(),
        }
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::NotFound { .. } => ApiError::not_found(e),
            StoreError::Conflict { .. } => ApiError::new(StatusCode::CONFLICT, "Conflict", Some("id".into()), e),
            StoreError::Invalid(v) => v.into(),
            StoreError::AssetMissing { ref path, .. } => {
                ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "AssetMissing", Some(path.clone()), &e)
            }
            StoreError::Io { .. } | StoreError::Corrupt { .. } => {
                ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", None, e)
            }
        }
    }
}

type ApiResult<T> = Result<T, ApiError>;

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/profiles", get(list_profiles).post(create_profile))
        .route("/api/profiles/{id}", get(get_profile).put(update_profile).delete(delete_profile))
        .route("/api/robot", get(get_robot).put(put_robot))
        .route("/api/exp/{id}", post(trigger).get(exp_status))
        .route("/api/assets", get(list_assets))
        .route("/api/assets/{id}", get(get_asset).put(put_asset))
        .with_state(state)
}

async fn list_profiles(State(s): State<AppState>) -> ApiResult<Json<Vec<BehaviorProfile>>> {
    Ok(Json(s.store.list_profiles()?))
}

async fn create_profile(State(s): State<AppState>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let p: BehaviorProfile = parse_body(&body)?;
    s.store.create_profile(&p)?;
    Ok((StatusCode::CREATED, Json(p)))
}

async fn get_profile(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<BehaviorProfile>> {
    Ok(Json(s.store.get_profile(&id)?))
}

async fn update_profile(State(s): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult<Json<BehaviorProfile>> {
    let p: BehaviorProfile = parse_body(&body)?;
    if p.id != id {
        return Err(ValidationError::new("id", format!("body id {:?} does not match {id:?}", p.id)).into());
    }
    s.store.update_profile(&p)?;
    Ok(Json(p))
}

async fn delete_profile(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<StatusCode> {
    s.store.delete_profile(&id)?;
    Ok(StatusCode::NO_CONTENT)
}

async fn get_robot(State(s): State<AppState>) -> ApiResult<Json<RobotDefinition>> {
    s.store.robot()?.map(Json).ok_or_else(|| ApiError::not_found("no robot definition"))
}

async fn put_robot(State(s): State<AppState>, body: Bytes) -> ApiResult<Json<RobotDefinition>> {
    let r: RobotDefinition = parse_body(&body)?;
    s.store.put_robot(&r)?;
    Ok(Json(r))
}

async fn trigger(State(s): State<AppState>, Path(profile_id): Path<String>) -> ApiResult<impl IntoResponse> {
    let profile = s.store.get_profile(&profile_id)?;
    let req = s
        .exp
        .trigger(&profile)
        .map_err(|e| ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "DispatchFailed", None, e))?;
    Ok((StatusCode::ACCEPTED, Json(req)))
}

async fn exp_status(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    s.exp.get(&id).map(Json).ok_or_else(|| ApiError::not_found(format!("request {id:?} not found")))
}

async fn list_assets(State(s): State<AppState>) -> ApiResult<impl IntoResponse> {
    Ok(Json(s.store.manifest()?))
}

async fn put_asset(State(s): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let info = s.store.put_asset(&id, &body)?;
    Ok((StatusCode::CREATED, Json(info)))
}

async fn get_asset(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    let bytes = s.store.get_asset(&id)?;
    Ok(([(header::CONTENT_TYPE, "application/octet-stream")], bytes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::behavior::exp::DEFAULT_ACK_TIMEOUT;
    use crate::bus::{Bus, Tier};
    use axum::body::Body;
    use axum::http::Request;
    use serde_json::Value as Json;
    use tower::ServiceExt;

    fn app(dir: &std::path::Path) -> (Router, Bus) {
        let bus = Bus::with_std();
        let exp = ExpPipeline::new(bus.create_node("behavior", Tier::Service).unwrap(), DEFAULT_ACK_TIMEOUT).unwrap();
        let state = AppState { store: Arc::new(Store::open(dir).unwrap()), exp: Arc::new(exp) };
        (router(state), bus)
    }

    async fn call(app: &Router, method: &str, uri: &str, body: &str) -> (StatusCode, Json) {
        let req = Request::builder().method(method).uri(uri).body(Body::from(body.to_string())).unwrap();
        let resp = app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let bytes = axum::body::to_bytes(resp.into_body(), usize::MAX).await.unwrap();
        (status, serde_json::from_slice(&bytes).unwrap_or(Json::Null))
    }

    #[tokio::test]
    async fn profile_lifecycle() {
        let tmp = tempfile::tempdir().unwrap();
        let (app, _bus) = app(tmp.path());
        call(&app, "PUT", "/api/assets/f1.png", "img").await;
        call(&app, "PUT", "/api/assets/s1.wav", "snd").await;
        let body = r#"{"id":"happy01","affect_label":"happy","face_asset":"f1.png","sound_asset":"s1.wav","description":""}"#;
        assert_eq!(call(&app, "POST", "/api/profiles", body).await.0, StatusCode::CREATED);
        let (st, got) = call(&app, "GET", "/api/profiles/happy01", "").await;
        assert_eq!((st, got["affect_label"].as_str()), (StatusCode::OK, Some("happy")));
        let (st, err) = call(&app, "POST", "/api/profiles", &body.replace("\"happy\"", "\"joyful\"")).await;
        assert_eq!(st, StatusCode::UNPROCESSABLE_ENTITY);
        assert_eq!(err["error"], "ValidationError");
        assert_eq!(err["path"], "affect_label");
        let (st, err) = call(&app, "POST", "/api/profiles", &body.replace("s1.wav", "zz.wav").replace("happy01", "b")).await;
        assert_eq!((st, err["error"].as_str(), err["path"].as_str()), (StatusCode::UNPROCESSABLE_ENTITY, Some("AssetMissing"), Some("sound_asset")));
        assert_eq!(call(&app, "POST", "/api/profiles", "{oops").await.1["error"], "BadJson");
        assert_eq!(call(&app, "DELETE", "/api/profiles/happy01", "").await.0, StatusCode::NO_CONTENT);
        let (st, err) = call(&app, "GET", "/api/profiles/happy01", "").await;
        assert_eq!((st, err["error"].as_str()), (StatusCode::NOT_FOUND, Some("NotFound")));
    }

    #[tokio::test]
    async fn robot_and_exp() {
        let tmp = tempfile::tempdir().unwrap();
        let (app, _bus) = app(tmp.path());
        assert_eq!(call(&app, "GET", "/api/robot", "").await.0, StatusCode::NOT_FOUND);
        let robot = r#"{"robot_name":"kiwi","actuators":[{"name":"base","kind":"wheel_pair","params":{"max_speed":0.5}},{"name":"voice","kind":"speaker","params":{}}],"sensors":[]}"#;
        assert_eq!(call(&app, "PUT", "/api/robot", robot).await.0, StatusCode::OK);
        let (_, got) = call(&app, "GET", "/api/robot", "").await;
        assert_eq!(got, serde_json::from_str::<Json>(robot).unwrap());
        let dup = robot.replace("\"voice\"", "\"base\"");
        let (st, err) = call(&app, "PUT", "/api/robot", &dup).await;
        assert_eq!((st, err["path"].as_str()), (StatusCode::UNPROCESSABLE_ENTITY, Some("actuators[1].name")));
        let (st, err) = call(&app, "POST", "/api/exp/ghost", "").await;
        assert_eq!((st, err["error"].as_str()), (StatusCode::NOT_FOUND, Some("NotFound")));
        assert_eq!(call(&app, "GET", "/api/exp/exp-000001", "").await.0, StatusCode::NOT_FOUND);
    }
}
