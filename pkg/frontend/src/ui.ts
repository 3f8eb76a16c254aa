// DOM wiring: start/resume screen, one-item rating screen, report screen.

import { StudyApi } from './api.js';
import { renderReport } from './report.js';
import { SessionController, SessionView } from './session.js';

export interface MountOptions {
  seed?: number;
}

export interface App {
  controller: SessionController;
  readonly view: SessionView;
}

const TEMPLATE = `
  <header><h1>Blinded rating study</h1></header>
  <section id="error-banner" hidden>
    <span id="error-text"></span>
    <button id="retry-button" type="button">Retry</button>
  </section>
  <section id="start-screen">
    <p>Judge each image as real or synthetic. One pass, no going back.</p>
    <button id="start-button" type="button">Start new session</button>
    <div class="resume">
      <input id="resume-input" placeholder="session id" aria-label="session id" />
      <button id="resume-button" type="button">Resume</button>
    </div>
  </section>
  <section id="loading-screen" hidden><p>Loading…</p></section>
  <section id="rating-screen" hidden>
    <div class="status">
      <span id="progress"></span>
      <span id="domain-label"></span>
      <span id="session-label"></span>
    </div>
    <figure class="stage">
      <img id="study-image" alt="blinded study image" />
    </figure>
    <div class="choices">
      <button id="judge-real" type="button">Real <kbd>R</kbd></button>
      <button id="judge-synthetic" type="button">Synthetic <kbd>S</kbd></button>
    </div>
  </section>
  <section id="report-screen" hidden>
    <div id="report-host"></div>
    <button id="new-session-button" type="button">Start another session</button>
  </section>
`;

function element<T extends HTMLElement>(root: ParentNode, id: string): T {
  const found = root.querySelector(`#${id}`);
  if (found === null) throw new Error(`missing element #${id}`);
  return found as T;
}

export function mount(root: HTMLElement, api: StudyApi, options: MountOptions = {}): App {
  const shell = document.createElement('main');
  shell.className = 'study-app';
  shell.innerHTML = TEMPLATE;
  root.appendChild(shell);

  const startScreen = element<HTMLElement>(shell, 'start-screen');
  const loadingScreen = element<HTMLElement>(shell, 'loading-screen');
  const ratingScreen = element<HTMLElement>(shell, 'rating-screen');
  const reportScreen = element<HTMLElement>(shell, 'report-screen');
  const errorBanner = element<HTMLElement>(shell, 'error-banner');
  const errorText = element<HTMLElement>(shell, 'error-text');
  const progress = element<HTMLElement>(shell, 'progress');
  const domainLabel = element<HTMLElement>(shell, 'domain-label');
  const sessionLabel = element<HTMLElement>(shell, 'session-label');
  const image = element<HTMLImageElement>(shell, 'study-image');
  const realButton = element<HTMLButtonElement>(shell, 'judge-real');
  const syntheticButton = element<HTMLButtonElement>(shell, 'judge-synthetic');
  const reportHost = element<HTMLElement>(shell, 'report-host');

  let lastItemId: string | null = null;

  const render = (view: SessionView): void => {
    startScreen.hidden = view.phase !== 'idle' && view.phase !== 'error';
    loadingScreen.hidden = view.phase !== 'loading';
    ratingScreen.hidden = view.phase !== 'rating' && view.phase !== 'submitting';
    reportScreen.hidden = view.phase !== 'complete';
    errorBanner.hidden = view.phase !== 'error';
    if (view.phase === 'error') {
      errorText.textContent = view.error ?? 'something went wrong';
    }

    const busy = view.phase !== 'rating';
    realButton.disabled = busy;
    syntheticButton.disabled = busy;

    if (view.item !== null) {
      progress.textContent = `${view.item.index}/${view.item.total}`;
      domainLabel.textContent = `domain: ${view.item.domain}`;
      sessionLabel.textContent = view.sessionId === null ? '' : `session: ${view.sessionId}`;
      if (view.item.item_id !== lastItemId) {
        lastItemId = view.item.item_id;
        // the PNG is rendered verbatim; intensity is never rescaled client-side
        image.src = `data:image/png;base64,${view.item.image_png}`;
      }
    }
    if (view.phase === 'complete' && view.report !== null) {
      reportHost.replaceChildren(renderReport(view.report));
      sessionLabel.textContent = '';
    }
  };

  const controller = new SessionController(api, render);

  image.addEventListener('load', () => controller.markRendered());
  element<HTMLButtonElement>(shell, 'start-button').addEventListener('click', () => {
    void controller.start(options.seed);
  });
  element<HTMLButtonElement>(shell, 'new-session-button').addEventListener('click', () => {
    void controller.start(options.seed);
  });
  element<HTMLButtonElement>(shell, 'resume-button').addEventListener('click', () => {
    const value = element<HTMLInputElement>(shell, 'resume-input').value.trim();
    if (value !== '') void controller.resume(value);
  });
  element<HTMLButtonElement>(shell, 'retry-button').addEventListener('click', () => {
    void controller.retry();
  });
  realButton.addEventListener('click', () => void controller.judge('real'));
  syntheticButton.addEventListener('click', () => void controller.judge('synthetic'));
  document.addEventListener('keydown', (event) => {
    if (event.key === 'r' || event.key === 'R') void controller.judge('real');
    if (event.key === 's' || event.key === 'S') void controller.judge('synthetic');
  });

  render(controller.view);
  return {
    controller,
    get view() {
      return controller.view;
    },
  };
}
