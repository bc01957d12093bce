/**
 * Registrar console orchestrator. This is the only module that touches
 * `document` and `window`: it wires the two screens to the gateway
 * client and renders view-models produced by the pure layer.
 */

import { GatewayClient, GatewayDown, GatewayFault } from './api.js';
import type { RegisterTarget, StudentListItem } from './types.js';
import {
  blockedBreakdown,
  faultBanner,
  filterStudents,
  verificationView,
  type VerificationView,
} from './viewmodel.js';

const DEFAULT_GATEWAY = 'http://127.0.0.1:7180';

function gatewayBase(): string {
  const fromQuery = new URLSearchParams(window.location.search).get('gateway');
  return fromQuery !== null && fromQuery !== '' ? fromQuery : DEFAULT_GATEWAY;
}

const client = new GatewayClient(gatewayBase());

function el(id: string): HTMLElement {
  return document.getElementById(id)!;
}

function inputEl(id: string): HTMLInputElement {
  return document.getElementById(id) as HTMLInputElement;
}

function selectEl(id: string): HTMLSelectElement {
  return document.getElementById(id) as HTMLSelectElement;
}

function buttonEl(id: string): HTMLButtonElement {
  return document.getElementById(id) as HTMLButtonElement;
}

// ---------------------------------------------------------------------------
// Shared rendering
// ---------------------------------------------------------------------------

function setBanner(target: HTMLElement, kind: 'ok' | 'error' | 'none', text = ''): void {
  target.textContent = text;
  target.className = kind === 'none' ? 'banner hidden' : `banner ${kind}`;
}

function bannerForError(target: HTMLElement, error: unknown): void {
  if (error instanceof GatewayDown) {
    setBanner(target, 'error', 'gateway unreachable');
  } else if (error instanceof GatewayFault) {
    setBanner(target, 'error', faultBanner(error));
  } else {
    setBanner(target, 'error', String(error));
  }
}

function renderVerification(target: HTMLElement, view: VerificationView): void {
  target.replaceChildren();
  const chips = document.createElement('div');
  chips.className = 'chips';
  for (const chip of view.chips) {
    const box = document.createElement('div');
    box.className = `chip ${chip.state.toLowerCase()}`;
    const head = document.createElement('strong');
    head.textContent = `${chip.department}: ${chip.state}`;
    box.appendChild(head);
    for (const reason of chip.reasons) {
      const line = document.createElement('div');
      line.className = 'reason';
      line.textContent = reason;
      box.appendChild(line);
    }
    chips.appendChild(box);
  }
  target.appendChild(chips);
  const overall = document.createElement('div');
  overall.className = `overall ${view.overall.toLowerCase()}`;
  overall.textContent = `Overall: ${view.overall}`;
  target.appendChild(overall);
}

// ---------------------------------------------------------------------------
// Registration screen
// ---------------------------------------------------------------------------

interface RegisterState {
  students: StudentListItem[];
  selected: string | null;
  busy: boolean;
}

const registerState: RegisterState = { students: [], selected: null, busy: false };

function renderStudentList(): void {
  const list = el('student-list');
  list.replaceChildren();
  const visible = filterStudents(registerState.students, inputEl('student-search').value);
  for (const item of visible) {
    const row = document.createElement('li');
    row.textContent = `${item.id}  ${item.label}`;
    row.className = item.id === registerState.selected ? 'student selected' : 'student';
    row.addEventListener('click', () => {
      registerState.selected = item.id;
      renderStudentList();
      syncRegisterControls();
    });
    list.appendChild(row);
  }
  el('student-count').textContent = `${visible.length} of ${registerState.students.length}`;
}

function syncRegisterControls(): void {
  buttonEl('register-button').disabled =
    registerState.busy || registerState.selected === null;
  buttonEl('reload-students').disabled = registerState.busy;
}

async function loadStudents(): Promise<void> {
  registerState.busy = true;
  syncRegisterControls();
  try {
    registerState.students = await client.listStudents();
    if (!registerState.students.some((item) => item.id === registerState.selected)) {
      registerState.selected = null;
    }
    setBanner(el('register-banner'), 'none');
  } catch (error) {
    registerState.students = [];
    registerState.selected = null;
    bannerForError(el('register-banner'), error);
  } finally {
    registerState.busy = false;
    renderStudentList();
    syncRegisterControls();
  }
}

async function submitRegistration(): Promise<void> {
  if (registerState.busy || registerState.selected === null) {
    return;
  }
  const target = selectEl('register-target').value as RegisterTarget;
  const studentId = registerState.selected;
  registerState.busy = true;
  syncRegisterControls();
  try {
    await client.register(target, studentId);
    setBanner(el('register-banner'), 'ok', `registered ${studentId} with ${target}`);
  } catch (error) {
    bannerForError(el('register-banner'), error);
  } finally {
    registerState.busy = false;
    syncRegisterControls();
  }
}

// ---------------------------------------------------------------------------
// Certificate screen
// ---------------------------------------------------------------------------

const certificateState = { busy: false };

let lastVerification: VerificationView | null = null;

function syncCertificateControls(): void {
  buttonEl('verify-button').disabled = certificateState.busy;
  buttonEl('issue-button').disabled =
    certificateState.busy || lastVerification === null || !lastVerification.issueEnabled;
}

async function runVerify(): Promise<void> {
  if (certificateState.busy) {
    return;
  }
  const studentId = inputEl('verify-student').value.trim();
  if (studentId === '') {
    setBanner(el('certificate-banner'), 'error', 'enter a student id');
    return;
  }
  certificateState.busy = true;
  syncCertificateControls();
  try {
    const verification = await client.verify(studentId);
    lastVerification = verificationView(verification);
    renderVerification(el('verification-output'), lastVerification);
    setBanner(el('certificate-banner'), 'none');
  } catch (error) {
    lastVerification = null;
    el('verification-output').replaceChildren();
    bannerForError(el('certificate-banner'), error);
  } finally {
    certificateState.busy = false;
    syncCertificateControls();
  }
}

async function runIssue(): Promise<void> {
  if (certificateState.busy || lastVerification === null || !lastVerification.issueEnabled) {
    return;
  }
  const programmeId = inputEl('issue-programme').value.trim();
  if (programmeId === '') {
    setBanner(el('certificate-banner'), 'error', 'enter a programme id');
    return;
  }
  certificateState.busy = true;
  syncCertificateControls();
  try {
    const certificate = await client.issueCertificate(lastVerification.studentId, programmeId);
    setBanner(el('certificate-banner'), 'ok', `issued ${certificate.certificate_id}`);
  } catch (error) {
    if (error instanceof GatewayFault && error.status === 409) {
      const breakdown = blockedBreakdown(error.detail);
      if (breakdown !== null) {
        lastVerification = verificationView(breakdown);
        renderVerification(el('verification-output'), lastVerification);
      }
    }
    bannerForError(el('certificate-banner'), error);
  } finally {
    certificateState.busy = false;
    syncCertificateControls();
  }
}

// ---------------------------------------------------------------------------
// Routing
// ---------------------------------------------------------------------------

function activeRoute(): 'register' | 'certificates' {
  return window.location.hash === '#/certificates' ? 'certificates' : 'register';
}

function showRoute(): void {
  const route = activeRoute();
  el('screen-register').className = route === 'register' ? 'screen' : 'screen hidden';
  el('screen-certificates').className = route === 'certificates' ? 'screen' : 'screen hidden';
  el('nav-register').className = route === 'register' ? 'active' : '';
  el('nav-certificates').className = route === 'certificates' ? 'active' : '';
}

export function boot(): void {
  el('gateway-label').textContent = gatewayBase();
  inputEl('student-search').addEventListener('input', renderStudentList);
  buttonEl('reload-students').addEventListener('click', () => void loadStudents());
  buttonEl('register-button').addEventListener('click', () => void submitRegistration());
  buttonEl('verify-button').addEventListener('click', () => void runVerify());
  buttonEl('issue-button').addEventListener('click', () => void runIssue());
  window.addEventListener('hashchange', showRoute);
  showRoute();
  syncCertificateControls();
  void loadStudents();
}

boot();
