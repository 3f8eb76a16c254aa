// Entry point: mount the app against the backend serving this page (or an
// explicit ?api= override) and auto-resume when ?session= is present.

import { StudyApi } from './api.js';
import { mount } from './ui.js';

const params = new URLSearchParams(window.location.search);
const baseUrl = params.get('api') ?? window.location.origin;
const seedParam = params.get('seed');

const app = mount(document.body, new StudyApi(baseUrl), {
  seed: seedParam === null ? undefined : Number(seedParam),
});

const sessionId = params.get('session');
if (sessionId !== null) {
  void app.controller.resume(sessionId);
}
